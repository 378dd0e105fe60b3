#pragma once

// Split-chain simulation: paths of X (optionally with W) together with the
// regeneration indicators Y_t, plus the block decomposition they induce.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <type_traits>
#include <vector>

#include "nullrec/error.hpp"
#include "nullrec/finite_model.hpp"
#include "nullrec/processes.hpp"
#include "nullrec/rng.hpp"

namespace nullrec {

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool contains(double v) const { return lo <= v && v <= hi; }
  [[nodiscard]] double width() const { return hi - lo; }
};

namespace detail {

inline double normal_pdf(double u) {
  constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
  return kInvSqrt2Pi * std::exp(-0.5 * u * u);
}

}  // namespace detail

/// Atom for a Gaussian random walk: s = s_level on C, nu uniform on C.
struct AtomSpecContinuous {
  Interval c;
  double s_level = 0.0;

  [[nodiscard]] double nu_density() const { return 1.0 / c.width(); }
};

/// For X' = X + sigma e: the transition density on C x C is bounded below by
/// phi(2h / sigma) / sigma, so s_level = 2h phi(2h / sigma) / sigma.
inline AtomSpecContinuous gaussian_rw_atom(double halfwidth, double sigma = 1.0) {
  if (!(halfwidth > 0.0) || !(halfwidth <= 1.0)) {
    throw Error(ErrorCode::kInvalidHalfwidth, "halfwidth must lie in (0, 1]");
  }
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");
  AtomSpecContinuous atom;
  atom.c = {-halfwidth, halfwidth};
  atom.s_level = 2.0 * halfwidth * detail::normal_pdf(2.0 * halfwidth / sigma) / sigma;
  return atom;
}

struct SplitTrajectory {
  std::vector<double> x;
  std::optional<std::vector<double>> w;
  std::vector<std::uint8_t> y;
  /// Regeneration bits of the X marginal alone, kept when y marks compound
  /// (X, W) regenerations.
  std::optional<std::vector<std::uint8_t>> y_x;
  std::vector<std::size_t> tau;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t n() const { return x.empty() ? 0 : x.size() - 1; }
};

struct SplitOptions {
  double halfwidth = 0.5;
  /// Split the compound (X, W) chain instead of X alone.
  bool compound = false;
  /// Halfwidth of the W side of a compound Gaussian atom.
  double w_halfwidth = 0.5;
};

inline std::vector<std::size_t> regeneration_indices(const std::vector<std::uint8_t>& y) {
  std::vector<std::size_t> tau;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t] != 0) tau.push_back(t);
  }
  return tau;
}

namespace detail {

inline bool bernoulli(double prob, double u) { return u < prob; }

// Retrospective split bit for a finite chain step i -> j.
inline bool finite_split_bit(const FiniteMarkovModel& model, std::size_t i, std::size_t j,
                             double u) {
  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(j);
  const double p = model.transition()(ii, jj);
  if (p <= 0.0) return false;
  const double ratio = model.small_function()(ii) * model.small_measure()(jj) / p;
  return bernoulli(std::min(1.0, ratio), u);
}

// Lower bound of the compound Gaussian density over the box (C x D)^2. The
// log-density is a concave quadratic, so its minimum over the box sits at a
// vertex.
inline double compound_density_floor(const LinearWiring& wiring, double sigma_e, Interval c,
                                     Interval d) {
  double floor = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < 16; ++mask) {
    const double x = (mask & 1) ? c.hi : c.lo;
    const double xn = (mask & 2) ? c.hi : c.lo;
    const double w = (mask & 4) ? d.hi : d.lo;
    const double wn = (mask & 8) ? d.hi : d.lo;
    const double xi = (xn - x) / sigma_e;
    const double density = normal_pdf(xi) / sigma_e *
                           normal_pdf((wn - wiring.a * w - wiring.b * xi) / wiring.c) / wiring.c;
    floor = std::min(floor, density);
  }
  return floor;
}

}  // namespace detail

/// Finite chain started from nu; y[t] ~ Bernoulli(s(X_t) nu(X_{t+1}) / P(X_t, X_{t+1})).
inline SplitTrajectory simulate_split(const FiniteMarkovModel& model, std::size_t n,
                                      std::uint64_t seed) {
  Engine path = make_engine(seed, Stream::kPath);
  Engine split = make_engine(seed, Stream::kSplit);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SplitTrajectory traj;
  traj.seed = seed;
  traj.x.resize(n + 1);
  traj.y.resize(n + 1);
  std::size_t state = detail::sample_vector(model.small_measure(), uniform(path));
  for (std::size_t t = 0; t <= n; ++t) {
    traj.x[t] = static_cast<double>(state);
    const std::size_t next = detail::sample_row(model.transition(), state, uniform(path));
    traj.y[t] = detail::finite_split_bit(model, state, next, uniform(split)) ? 1 : 0;
    state = next;
  }
  traj.tau = regeneration_indices(traj.y);
  return traj;
}

/// Split chain of a generated system. The X marginal is split with the
/// Gaussian random-walk atom (or with the X chain's atom for FINITE_PRODUCT);
/// with options.compound the pair (X, W) is split instead. The path is drawn
/// from the same stream as generate(), so x and w coincide with it.
inline SplitTrajectory simulate_split(const ProcessSpec& spec, std::size_t n, std::uint64_t seed,
                                      const SplitOptions& options = {}) {
  validate(spec);
  const bool finite = spec.family == Family::kFiniteProduct;
  std::optional<LinearWiring> wiring;
  if (options.compound && !finite) {
    wiring = linear_wiring(spec);
    if (!wiring) {
      throw Error(ErrorCode::kUnknownProcessFamily,
                  "no compound split for family " + to_string(spec.family));
    }
    if (!(wiring->c > 0.0)) {
      throw Error(ErrorCode::kInvalidSpec, "compound split needs nondegenerate W noise");
    }
  }
  const double sigma = spec.params.sigma_e;
  std::optional<AtomSpecContinuous> atom;
  if (!finite && sigma > 0.0) atom = gaussian_rw_atom(options.halfwidth, sigma);
  Interval d{-options.w_halfwidth, options.w_halfwidth};
  double compound_ratio_numerator = 0.0;
  if (wiring && atom) {
    if (!(options.w_halfwidth > 0.0)) {
      throw Error(ErrorCode::kInvalidHalfwidth, "W halfwidth must be positive");
    }
    // s nu-density = floor, with nu uniform on C x D.
    compound_ratio_numerator = detail::compound_density_floor(*wiring, sigma, atom->c, d);
  }

  PathGenerator gen(spec, seed);
  Engine split = make_engine(seed, Stream::kSplit);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SplitTrajectory traj;
  traj.seed = seed;
  traj.x.resize(n + 1);
  traj.w.emplace(n + 1);
  traj.y.resize(n + 1);
  if (options.compound) traj.y_x.emplace(n + 1);

  for (std::size_t t = 0; t <= n; ++t) {
    const double x = gen.x();
    const double w = gen.w();
    const std::size_t xs = gen.x_state();
    const std::size_t ws = gen.w_state();
    traj.x[t] = x;
    (*traj.w)[t] = w;
    gen.advance();
    const double u1 = uniform(split);
    const double u2 = uniform(split);
    bool bit_x = false;
    bool bit = false;
    if (finite) {
      bit_x = detail::finite_split_bit(*spec.x_chain, xs, gen.x_state(), u1);
      bit = bit_x;
      if (options.compound) {
        bit = bit_x && detail::finite_split_bit(*spec.w_chain, ws, gen.w_state(), u2);
      }
    } else if (atom) {
      const double xn = gen.x();
      const double xi = (xn - x) / sigma;
      const bool in_c = atom->c.contains(x) && atom->c.contains(xn);
      if (in_c) {
        const double px = detail::normal_pdf(xi) / sigma;
        bit_x = detail::bernoulli(atom->s_level * atom->nu_density() / px, u1);
      }
      bit = bit_x;
      if (wiring) {
        bit = false;
        const double wn = gen.w();
        if (in_c && d.contains(w) && d.contains(wn)) {
          const double p = detail::normal_pdf(xi) / sigma *
                           detail::normal_pdf((wn - wiring->a * w - wiring->b * xi) / wiring->c) /
                           wiring->c;
          bit = detail::bernoulli(compound_ratio_numerator / p, u1);
        }
      }
    }
    traj.y[t] = bit ? 1 : 0;
    if (traj.y_x) (*traj.y_x)[t] = bit_x ? 1 : 0;
  }
  traj.tau = regeneration_indices(traj.y);
  return traj;
}

struct RegenerationStats {
  std::size_t count = 0;  // T(n)
  std::vector<std::size_t> tau;
  std::vector<std::size_t> lengths;
};

/// T(n) = max{k : tau_k <= n} or 0, with tau indexed from 0; lengths are
/// tau_k - tau_{k-1} with tau_{-1} = -1.
inline RegenerationStats regeneration_stats(const SplitTrajectory& traj) {
  RegenerationStats stats;
  stats.tau = traj.tau;
  stats.count = stats.tau.empty() ? 0 : stats.tau.size() - 1;
  std::size_t previous_end = 0;  // tau_{k-1} + 1
  for (std::size_t t : stats.tau) {
    stats.lengths.push_back(t + 1 - previous_end);
    previous_end = t + 1;
  }
  return stats;
}

inline std::size_t occupation_count(const SplitTrajectory& traj, const Interval& c) {
  return static_cast<std::size_t>(
      std::count_if(traj.x.begin(), traj.x.end(), [&](double v) { return c.contains(v); }));
}

/// Occupation of a set of finite states (x holds state indices).
inline std::size_t occupation_count(const SplitTrajectory& traj,
                                    const std::vector<std::size_t>& states) {
  std::size_t count = 0;
  for (double v : traj.x) {
    const auto idx = static_cast<std::size_t>(v);
    if (std::find(states.begin(), states.end(), idx) != states.end()) ++count;
  }
  return count;
}

struct BlockDecomposition {
  double u0 = 0.0;
  std::vector<double> blocks;  // U_1 .. U_{T(n)}
  double tail = 0.0;
  std::vector<std::size_t> lengths;
};

/// S_n(g) = U_0 + U_1 + ... + U_{T(n)} + U_(n). With no regeneration the
/// whole sum is U_0. g takes x, or (x, w) when the trajectory carries w.
template <class G>
  requires(!std::is_base_of_v<Eigen::EigenBase<std::decay_t<G>>, std::decay_t<G>>)
BlockDecomposition block_sums(const SplitTrajectory& traj, G&& g) {
  auto value = [&](std::size_t t) -> double {
    if constexpr (std::is_invocable_v<G, double, double>) {
      return g(traj.x[t], traj.w ? (*traj.w)[t] : 0.0);
    } else {
      return g(traj.x[t]);
    }
  };
  BlockDecomposition out;
  const std::size_t len = traj.x.size();
  if (traj.tau.empty()) {
    long double sum = 0.0L;
    for (std::size_t t = 0; t < len; ++t) sum += value(t);
    out.u0 = static_cast<double>(sum);
    return out;
  }
  std::size_t t = 0;
  for (std::size_t k = 0; k < traj.tau.size(); ++k) {
    long double sum = 0.0L;
    for (; t <= traj.tau[k]; ++t) sum += value(t);
    if (k == 0) {
      out.u0 = static_cast<double>(sum);
    } else {
      out.blocks.push_back(static_cast<double>(sum));
      out.lengths.push_back(traj.tau[k] - traj.tau[k - 1]);
    }
  }
  long double tail = 0.0L;
  for (; t < len; ++t) tail += value(t);
  out.tail = static_cast<double>(tail);
  return out;
}

/// Finite-state g given as a vector over state indices.
inline BlockDecomposition block_sums(const SplitTrajectory& traj, const Vector& g) {
  return block_sums(traj, [&](double x) { return g(static_cast<Eigen::Index>(x)); });
}

}  // namespace nullrec
