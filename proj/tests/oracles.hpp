#pragma once

// Reference computations that avoid the library's own algebra. Each one
// takes a different route to a quantity the library computes.

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nullrec/finite_model.hpp"

namespace oracle {

using nullrec::FiniteMarkovModel;
using nullrec::Matrix;
using nullrec::Vector;

/// E U^m on the symmetric two-state chain: the block length L is geometric
/// with P(L = l) = 2^{-l} and, given L, U(g = (1, 0)) ~ Binomial(L, 1/2).
inline double geometric_block_moment(int m, int max_length = 400) {
  double total = 0.0;
  for (int l = 1; l <= max_length; ++l) {
    const boost::math::binomial_distribution<double> bin(l, 0.5);
    double conditional = 0.0;
    for (int k = 1; k <= l; ++k) conditional += boost::math::pdf(bin, k) * std::pow(k, m);
    total += std::ldexp(conditional, -l);
  }
  return total;
}

/// M_k(x) = E_x U^k by the first-step recursion
///   M_k = g^k + sum_{j=1}^k C(k, j) g^{k-j} (H M_j),
/// each M_k obtained by fixed-point iteration of M = b + H M. No matrix
/// inverse is formed.
inline std::vector<Vector> value_iteration_moments(const FiniteMarkovModel& model, const Vector& g,
                                                   int m, int max_iter = 200000,
                                                   double tol = 1e-15) {
  const Matrix h = model.transition() - model.small_function() * model.small_measure().transpose();
  const Eigen::Index d = g.size();
  std::vector<Vector> moments(static_cast<std::size_t>(m) + 1, Vector::Ones(d));
  auto binom = [](int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  for (int k = 1; k <= m; ++k) {
    Vector b = g.array().pow(k).matrix();
    for (int j = 1; j < k; ++j) {
      b += binom(k, j) * g.array().pow(k - j).matrix().cwiseProduct(h * moments[static_cast<std::size_t>(j)]);
    }
    Vector mk = b;
    for (int it = 0; it < max_iter; ++it) {
      Vector next = b + h * mk;
      const double change = (next - mk).cwiseAbs().maxCoeff();
      mk = next;
      if (change <= tol * std::max(1.0, mk.cwiseAbs().maxCoeff())) break;
    }
    moments[static_cast<std::size_t>(k)] = mk;
  }
  return moments;
}

/// Embedded transition through one Kronecker solve:
///   P~ = (nu_1 (x) I) (I - H_1 (x) P_2)^{-1} (s_1 (x) I) P_2.
inline Matrix embedded_transition_kron(const FiniteMarkovModel& x, const FiniteMarkovModel& w) {
  const Matrix h1 = x.transition() - x.small_function() * x.small_measure().transpose();
  const Matrix& p2 = w.transition();
  const Eigen::Index d1 = h1.rows();
  const Eigen::Index d2 = p2.rows();
  Matrix k(d1 * d2, d1 * d2);
  for (Eigen::Index i = 0; i < d1; ++i) {
    for (Eigen::Index j = 0; j < d1; ++j) k.block(i * d2, j * d2, d2, d2) = h1(i, j) * p2;
  }
  Matrix rhs = Matrix::Zero(d1 * d2, d2);
  for (Eigen::Index i = 0; i < d1; ++i) {
    rhs.block(i * d2, 0, d2, d2) = x.small_function()(i) * Matrix::Identity(d2, d2);
  }
  const Matrix solved = (Matrix::Identity(d1 * d2, d1 * d2) - k).partialPivLu().solve(rhs);
  Matrix out = Matrix::Zero(d2, d2);
  for (Eigen::Index i = 0; i < d1; ++i) out += x.small_measure()(i) * solved.block(i * d2, 0, d2, d2);
  return out * p2;
}

inline double normal_pdf(double u) {
  static const boost::math::normal_distribution<double> n01;
  return boost::math::pdf(n01, u);
}

inline double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> n01;
  return boost::math::quantile(n01, p);
}

/// Random valid model with at most max_states states: strictly positive
/// rows, atom (s, nu) with s = c * min-row-ratio so that P >= s (x) nu.
inline FiniteMarkovModel random_model(std::mt19937_64& rng, int max_states = 5) {
  std::uniform_int_distribution<int> size_dist(2, max_states);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  const int d = size_dist(rng);
  Matrix p(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) p(i, j) = unit(rng);
    p.row(i) /= p.row(i).sum();
  }
  Vector nu(d);
  for (int j = 0; j < d; ++j) nu(j) = unit(rng);
  nu /= nu.sum();
  Vector s(d);
  for (int i = 0; i < d; ++i) {
    double ratio = 1.0;
    for (int j = 0; j < d; ++j) ratio = std::min(ratio, p(i, j) / nu(j));
    s(i) = ratio * std::uniform_real_distribution<double>(0.2, 0.95)(rng);
  }
  // Make rows sum exactly to one after the division above.
  for (int i = 0; i < d; ++i) p(i, d - 1) = 1.0 - (p.row(i).sum() - p(i, d - 1));
  return FiniteMarkovModel(p, s, nu);
}

inline FiniteMarkovModel two_state_symmetric() {
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  Vector half(2);
  half << 0.5, 0.5;
  return FiniteMarkovModel(p, half, half);
}

}  // namespace oracle
