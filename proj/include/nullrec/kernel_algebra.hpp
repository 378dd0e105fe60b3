#pragma once

// Exact regeneration algebra for finite chains with an atom (s, nu):
// taboo kernel H = P - s (x) nu, fundamental kernel G = sum_l H^l,
// invariant measure pi_s = nu G, block moments, generalized autocovariances,
// the chain embedded at regeneration times of an independent chain, and the
// compound block moments built from it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "nullrec/error.hpp"
#include "nullrec/finite_model.hpp"

namespace nullrec {

enum class KernelKind { kTaboo, kFundamental, kPower, kEmbedded };

struct KernelMatrix {
  Matrix entries;
  KernelKind kind;
};

struct InvariantMeasure {
  RowVector pi;
};

/// A truncated-series result together with the analytic bound on what the
/// truncation dropped.
struct SeriesValue {
  double value = 0.0;
  double tail_bound = 0.0;
  std::size_t terms = 0;
};

inline constexpr int kMaxMomentOrder = 6;

namespace detail {

inline double sup_norm(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

inline double row_sum_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

inline Vector pow_elementwise(const Vector& g, int k) {
  return g.array().pow(static_cast<double>(k)).matrix();
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

inline double factorial(int n) {
  double out = 1.0;
  for (int k = 2; k <= n; ++k) out *= k;
  return out;
}

inline double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

// (I - K)^{-1} for an entrywise nonnegative K. The inverse is nonnegative
// exactly when the spectral radius of K is below one, which is the
// convergence condition of the Neumann series.
inline Matrix nonnegative_resolvent(const Matrix& k, double tol) {
  const Eigen::Index d = k.rows();
  const Matrix a = Matrix::Identity(d, d) - k;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::kSeriesDiverges, "I - H is numerically singular");
  }
  Matrix g = lu.solve(Matrix::Identity(d, d));
  const double scale = std::max(1.0, sup_norm(g));
  if (g.minCoeff() < -1e-9 * scale) {
    throw Error(ErrorCode::kSeriesDiverges, "spectral radius of H is not below one");
  }
  if (sup_norm(a * g - Matrix::Identity(d, d)) > std::max(tol, 1e-12 * scale)) {
    throw Error(ErrorCode::kSeriesDiverges, "I - H is too ill-conditioned to invert");
  }
  return g;
}

}  // namespace detail

/// All alpha in N_+^r with components summing to m, for r = 1..m.
inline std::vector<std::vector<int>> compositions(int m) {
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  std::function<void(int)> extend = [&](int remaining) {
    if (remaining == 0) {
      out.push_back(current);
      return;
    }
    for (int part = 1; part <= remaining; ++part) {
      current.push_back(part);
      extend(remaining - part);
      current.pop_back();
    }
  };
  extend(m);
  return out;
}

inline double multinomial(int m, const std::vector<int>& alpha) {
  double denom = 1.0;
  for (int a : alpha) denom *= detail::factorial(a);
  return detail::factorial(m) / denom;
}

inline KernelMatrix taboo_kernel(const FiniteMarkovModel& model) {
  Matrix h = model.transition() - model.small_function() * model.small_measure().transpose();
  h = h.unaryExpr([](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; });
  return {std::move(h), KernelKind::kTaboo};
}

/// G solving (I - H) G = I by a direct LU solve.
inline KernelMatrix fundamental_kernel(const KernelMatrix& h, double tol = 1e-10) {
  return {detail::nonnegative_resolvent(h.entries, tol), KernelKind::kFundamental};
}

/// The Neumann series sum_l H^l, stopped once the sup-norm of the newest term
/// drops below tol. Kept as the cross-check route for fundamental_kernel.
inline KernelMatrix fundamental_kernel_series(const KernelMatrix& h, double tol = 1e-14,
                                              std::size_t max_terms = 1'000'000) {
  const Eigen::Index d = h.entries.rows();
  Matrix sum = Matrix::Identity(d, d);
  Matrix term = Matrix::Identity(d, d);
  for (std::size_t l = 1; l <= max_terms; ++l) {
    term = term * h.entries;
    sum += term;
    const double increment = detail::sup_norm(term);
    if (!std::isfinite(increment)) break;
    if (increment < tol) return {std::move(sum), KernelKind::kFundamental};
  }
  throw Error(ErrorCode::kSeriesDiverges, "power series did not settle within the term budget");
}

inline KernelMatrix fundamental_kernel(const FiniteMarkovModel& model, double tol = 1e-10) {
  return fundamental_kernel(taboo_kernel(model), tol);
}

/// pi_s = nu G, normalized by the atom so that pi_s s = 1.
inline InvariantMeasure invariant_measure(const FiniteMarkovModel& model) {
  const auto g = fundamental_kernel(model);
  return {model.small_measure().transpose() * g.entries};
}

struct BlockMeanVariance {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of a regeneration block sum U(g).
inline BlockMeanVariance block_mean_variance(const FiniteMarkovModel& model, const Vector& g) {
  if (g.size() != static_cast<Eigen::Index>(model.size()) || !g.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "g must be finite with one value per state");
  }
  const Matrix& p = model.transition();
  const Vector& s = model.small_function();
  const Matrix gk = fundamental_kernel(model).entries;
  const RowVector pi = model.small_measure().transpose() * gk;

  const double mean = pi.dot(g);
  const double second = pi.dot(g.cwiseProduct(g));
  const double cross = pi.dot(g.cwiseProduct(p * (gk * g)));
  const double atom_term = pi.dot(s.cwiseProduct(g)) * mean;
  double variance = second - mean * mean + 2.0 * cross - 2.0 * atom_term;

  const double scale = std::max({1.0, std::abs(second), std::abs(cross), mean * mean});
  if (variance < 0.0) {
    if (variance < -1e-10 * scale) {
      throw Error(ErrorCode::kNegativeVariance, "block variance " + std::to_string(variance));
    }
    variance = 0.0;
  }
  return {mean, variance};
}

struct BlockMomentRequest {
  Vector g;
  int order = 1;
  /// Starting state; nullopt starts from the small measure nu.
  std::optional<std::size_t> start;
};

/// E U_0^m via the exact multinomial sum over compositions of m, with every
/// geometric inner sum closed by G:
/// psi_{r,alpha} = [G I_{g^a1} H] ... [G I_{g^a(r-1)} H] G I_{g^ar} 1.
inline double block_moment(const FiniteMarkovModel& model, const BlockMomentRequest& request,
                           double tol = 1e-10) {
  const int m = request.order;
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "moment order must be positive");
  if (m > kMaxMomentOrder) {
    throw Error(ErrorCode::kOrderTooLarge, "order " + std::to_string(m) + " exceeds 6");
  }
  if (request.g.size() != static_cast<Eigen::Index>(model.size())) {
    throw Error(ErrorCode::kInvalidArgument, "g has wrong length");
  }
  if (request.start && *request.start >= model.size()) {
    throw Error(ErrorCode::kInvalidArgument, "start state out of range");
  }
  const auto h = taboo_kernel(model);
  const Matrix g_kernel = fundamental_kernel(h, tol).entries;

  Vector total = Vector::Zero(request.g.size());
  for (const auto& alpha : compositions(m)) {
    Vector v = g_kernel * detail::pow_elementwise(request.g, alpha.back());
    for (auto it = alpha.rbegin() + 1; it != alpha.rend(); ++it) {
      v = g_kernel * detail::pow_elementwise(request.g, *it).cwiseProduct(h.entries * v);
    }
    total += multinomial(m, alpha) * v;
  }
  if (request.start) return total(static_cast<Eigen::Index>(*request.start));
  return model.small_measure().dot(total);
}

/// Bounded weight sequence a_0, a_1, ... with a known bound sup_k |a_k|.
struct WeightSequence {
  std::function<double(std::size_t)> at;
  double sup = 1.0;
};

/// E U_0^m(a, g) for U_0(a, g) = sum_{k <= tau} a_k g(X_k), m in {1, 2}, with
/// the j and l sums truncated at `terms`. The reported tail bound uses
/// sum_{j > L} H^j = H^{L+1} G, which is exact for the nonnegative H.
inline SeriesValue weighted_block_moment(const FiniteMarkovModel& model, const WeightSequence& a,
                                         const Vector& g, int m, std::size_t terms, double tol,
                                         std::optional<std::size_t> start = std::nullopt) {
  if (m != 1 && m != 2) throw Error(ErrorCode::kOrderTooLarge, "weighted moments need m in {1,2}");
  if (g.size() != static_cast<Eigen::Index>(model.size())) {
    throw Error(ErrorCode::kInvalidArgument, "g has wrong length");
  }
  const Eigen::Index d = g.size();
  const auto h = taboo_kernel(model).entries;
  const Matrix gk = fundamental_kernel(model, tol).entries;
  RowVector init = RowVector::Zero(d);
  if (start) {
    init(static_cast<Eigen::Index>(*start)) = 1.0;
  } else {
    init = model.small_measure().transpose();
  }
  const Vector abs_g = g.cwiseAbs();

  Matrix h_tail = h;  // H^{L+1} once the loop below has run
  for (std::size_t l = 0; l < terms; ++l) h_tail = h_tail * h;

  SeriesValue out;
  out.terms = terms;
  if (m == 1) {
    RowVector row = init;
    for (std::size_t j = 0; j <= terms; ++j) {
      out.value += a.at(j) * row.dot(g);
      row = row * h;
    }
    out.tail_bound = a.sup * (init * h_tail * gk * abs_g)(0);
  } else {
    const Vector g2 = g.cwiseProduct(g);
    // c_l = H^l g for l = 1..L
    std::vector<Vector> columns(terms + 1);
    columns[0] = g;
    for (std::size_t l = 1; l <= terms; ++l) columns[l] = h * columns[l - 1];
    RowVector row = init;
    for (std::size_t j = 0; j <= terms; ++j) {
      const double aj = a.at(j);
      out.value += aj * aj * row.dot(g2);
      const RowVector weighted = row.cwiseProduct(g.transpose());
      double inner = 0.0;
      for (std::size_t l = 1; l <= terms; ++l) inner += a.at(j + l) * weighted.dot(columns[l]);
      out.value += 2.0 * aj * inner;
      row = row * h;
    }
    const double a2 = a.sup * a.sup;
    const Vector hg_abs = h * gk * abs_g;
    const double tail_square = (init * h_tail * gk * g2)(0);
    const double tail_outer = (init * h_tail * gk * abs_g.cwiseProduct(hg_abs))(0);
    const double tail_inner = (init * gk * abs_g.cwiseProduct(h_tail * gk * abs_g))(0);
    out.tail_bound = a2 * (tail_square + 2.0 * (tail_outer + tail_inner));
  }
  if (out.tail_bound > tol) throw TruncationInsufficient(out.tail_bound, tol);
  return out;
}

/// Generalized covariance gamma_{g,f}(l) for chains whose invariant measure
/// may have infinite mass; f_0 = f - s mu_f and phi_g = pi_s I_g P - mu_g nu.
inline double generalized_autocov(const FiniteMarkovModel& model, const Vector& g, const Vector& f,
                                  long ell) {
  if (ell < 0) return generalized_autocov(model, f, g, -ell);
  const auto& p = model.transition();
  const auto& s = model.small_function();
  const RowVector pi = invariant_measure(model).pi;
  const double mu_g = pi.dot(g);
  const double mu_f = pi.dot(f);
  const Vector f0 = f - s * mu_f;
  if (ell == 0) {
    const Vector g0 = g - s * mu_g;
    // pi_s s^2 is read as pi_s applied to the pointwise square of s.
    return pi.dot(g0.cwiseProduct(f0)) + mu_g * mu_f * (1.0 - pi.dot(s.cwiseProduct(s)));
  }
  RowVector phi = pi.cwiseProduct(g.transpose()) * p - mu_g * model.small_measure().transpose();
  for (long k = 1; k < ell; ++k) phi = phi * p;
  return phi.dot(f0);
}

/// Sum of gamma_g(l) over |l| <= L. On a finite aperiodic chain the omitted
/// tail equals phi_g (P - Pi)^L Z f_0 with Z = (I - P + Pi)^{-1}; its norm
/// bound is reported.
inline SeriesValue sigma2_from_series(const FiniteMarkovModel& model, const Vector& g,
                                      std::size_t terms, double tol) {
  const Eigen::Index d = g.size();
  const auto& p = model.transition();
  const auto& s = model.small_function();
  const RowVector pi = invariant_measure(model).pi;
  const double mu_g = pi.dot(g);
  const Vector g0 = g - s * mu_g;

  SeriesValue out;
  out.terms = terms;
  out.value = generalized_autocov(model, g, g, 0);
  RowVector phi = pi.cwiseProduct(g.transpose()) * p - mu_g * model.small_measure().transpose();
  const RowVector phi_start = phi;
  for (std::size_t l = 1; l <= terms; ++l) {
    out.value += 2.0 * phi.dot(g0);
    phi = phi * p;
  }

  const RowVector stationary = pi / pi.sum();
  const Matrix projector = Vector::Ones(d) * stationary;
  const Matrix deviation = p - projector;
  const Matrix z = (Matrix::Identity(d, d) - deviation).inverse();
  Matrix power = Matrix::Identity(d, d);
  for (std::size_t l = 0; l < terms; ++l) power = power * deviation;
  out.tail_bound = 2.0 * phi_start.cwiseAbs().sum() * detail::row_sum_norm(power * z) *
                   g0.cwiseAbs().maxCoeff();
  if (out.tail_bound > tol) throw TruncationInsufficient(out.tail_bound, tol);
  return out;
}

struct EmbeddedTransition {
  KernelMatrix p_tilde;
  /// Atom of the embedded chain: (s_2, nu_2 Phi).
  Vector s;
  Vector nu;
  /// b_l = nu_1 H_1^{l-1} s_1, l = 1..L: law of the X regeneration gap.
  std::vector<double> coefficients;
  double tail_bound = 0.0;
};

/// Transition of W sampled at the regeneration times of an independent X:
/// P~ = P_2 Phi, Phi = sum_l (nu_1 H_1^l s_1) P_2^l.
inline EmbeddedTransition embedded_transition(const FiniteMarkovModel& x_model,
                                              const FiniteMarkovModel& w_model, double tol = 1e-12,
                                              std::size_t max_terms = 1'000'000) {
  const auto h1 = taboo_kernel(x_model).entries;
  const Matrix g1 = fundamental_kernel(x_model).entries;
  const Vector& s1 = x_model.small_function();
  const Matrix& p2 = w_model.transition();
  const Eigen::Index d2 = p2.rows();

  const double total_mass = x_model.small_measure().dot(g1 * s1);
  if (total_mass < 1.0 - tol) {
    throw Error(ErrorCode::kCoefficientMassDeficit,
                "regeneration gap mass " + std::to_string(total_mass));
  }

  EmbeddedTransition out;
  Matrix phi = Matrix::Zero(d2, d2);
  Matrix p2_power = Matrix::Identity(d2, d2);
  RowVector row = x_model.small_measure().transpose();
  std::size_t l = 0;
  for (; l < max_terms; ++l) {
    const double b = row.dot(s1);
    out.coefficients.push_back(b);
    phi += b * p2_power;
    row = row * h1;
    p2_power = p2_power * p2;
    // Mass of gaps longer than l + 1, evaluated in closed form.
    out.tail_bound = row.dot(g1 * s1);
    if (out.tail_bound < tol) break;
  }
  if (out.tail_bound >= tol) throw TruncationInsufficient(out.tail_bound, tol);

  out.p_tilde = {p2 * phi, KernelKind::kEmbedded};
  out.s = w_model.small_function();
  out.nu = (w_model.small_measure().transpose() * phi).transpose();
  return out;
}

/// Closed form and truncated evaluation of E_nu sum_{k <= T} V_k^m, m <= 3,
/// where V_k are the X-block sums of g_X(X_t) g_W(W_t) for independent
/// finite X and W. The shared j-sums are carried by the Kronecker kernel
/// K = H_1 (x) P_2, whose powers are entrywise nonnegative.
struct CompoundMoment {
  double value = 0.0;
  double closed_form = 0.0;
  double tail_bound = 0.0;
  std::size_t terms = 0;
};

inline CompoundMoment compound_block_moment(const FiniteMarkovModel& x_model,
                                            const FiniteMarkovModel& w_model, const Vector& g_x,
                                            const Vector& g_w, int m, double tol = 1e-10,
                                            std::size_t max_terms = std::size_t{1} << 22) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "moment order must be positive");
  if (m > 3) throw Error(ErrorCode::kOrderTooLarge, "compound moments need m <= 3");
  if (g_x.size() != static_cast<Eigen::Index>(x_model.size()) ||
      g_w.size() != static_cast<Eigen::Index>(w_model.size())) {
    throw Error(ErrorCode::kInvalidArgument, "g_X / g_W have wrong length");
  }
  const RowVector pi1 = invariant_measure(x_model).pi;
  const RowVector pi2 = invariant_measure(w_model).pi;
  const Vector pi = detail::kron(Vector(pi1.transpose()), Vector(pi2.transpose()));
  const Matrix k = detail::kron(taboo_kernel(x_model).entries, w_model.transition());
  const Matrix resolvent = detail::nonnegative_resolvent(k, tol);
  const Matrix exact_sum = k * resolvent;  // sum_{j >= 1} K^j

  const auto alphas = compositions(m);
  auto evaluate = [&](const Matrix& sum, bool absolute) {
    double total = 0.0;
    for (const auto& alpha : alphas) {
      auto factor = [&](int power) {
        Vector gx = detail::pow_elementwise(g_x, power);
        Vector gw = detail::pow_elementwise(g_w, power);
        if (absolute) {
          gx = gx.cwiseAbs();
          gw = gw.cwiseAbs();
        }
        return detail::kron(gx, gw);
      };
      Vector v = factor(alpha.back());
      for (auto it = alpha.rbegin() + 1; it != alpha.rend(); ++it) {
        v = factor(*it).cwiseProduct(sum * v);
      }
      total += multinomial(m, alpha) * pi.dot(v);
    }
    return total;
  };

  CompoundMoment out;
  out.closed_form = evaluate(exact_sum, false);
  const double abs_exact = evaluate(exact_sum, true);

  const Eigen::Index n = k.rows();
  Matrix partial = k;  // sum_{j=1}^{L} K^j
  Matrix power = k;    // K^L
  std::size_t l = 1;
  while (true) {
    out.tail_bound = std::max(0.0, abs_exact - evaluate(partial, true));
    if (m == 1 || out.tail_bound < tol) break;
    if (l >= max_terms) throw TruncationInsufficient(out.tail_bound, tol);
    partial += power * partial;
    power = power * power;
    l *= 2;
  }
  if (m == 1) out.tail_bound = 0.0;
  out.terms = m == 1 ? 0 : l;
  out.value = evaluate(m == 1 ? Matrix::Zero(n, n) : partial, false);
  return out;
}

/// Forward path enumeration of E U_0^m: every path x_0 .. x_t surviving the
/// taboo kernel contributes with weight start(x_0) H(x_0,x_1)...H(x_{t-1},x_t)
/// s(x_t). Paths are aggregated by their end state and the running moments
/// of their partial sums, so depth D costs O(D m^2 d^2). Independent of G.
inline SeriesValue path_enumeration_moment(const FiniteMarkovModel& model, const Vector& g, int m,
                                           std::optional<std::size_t> start = std::nullopt,
                                           std::size_t max_depth = 100'000,
                                           double mass_tol = 1e-17) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "moment order must be positive");
  const Eigen::Index d = g.size();
  const auto h = taboo_kernel(model).entries;
  const Vector& s = model.small_function();
  // alive(j, x) = E[S^j; block still running, at state x]
  Matrix alive = Matrix::Zero(m + 1, d);
  if (start) {
    alive(0, static_cast<Eigen::Index>(*start)) = 1.0;
  } else {
    alive.row(0) = model.small_measure().transpose();
  }
  std::vector<double> moments(static_cast<std::size_t>(m) + 1, 0.0);
  SeriesValue out;
  for (std::size_t depth = 0; depth < max_depth; ++depth) {
    Matrix added = Matrix::Zero(m + 1, d);
    for (int j = 0; j <= m; ++j) {
      for (int i = 0; i <= j; ++i) {
        added.row(j) += detail::binomial(j, i) *
                        alive.row(i).cwiseProduct(detail::pow_elementwise(g, j - i).transpose());
      }
    }
    for (int j = 0; j <= m; ++j) moments[static_cast<std::size_t>(j)] += added.row(j).dot(s);
    alive = added * h;
    out.terms = depth + 1;
    out.tail_bound = alive.row(0).sum();
    if (out.tail_bound < mass_tol) break;
  }
  out.value = moments[static_cast<std::size_t>(m)];
  return out;
}

}  // namespace nullrec
