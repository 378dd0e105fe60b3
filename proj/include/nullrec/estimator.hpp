#pragma once

// Nadaraya-Watson regression for Z_t = f(X_t) + W_t with a null recurrent
// regressor, local bandwidth rules and the studentized statistic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nullrec/error.hpp"
#include "nullrec/split_chain.hpp"

namespace nullrec {

struct KernelSpec {
  enum class Kind { kEpanechnikov, kGaussianTruncated };
  Kind kind = Kind::kEpanechnikov;
  double cutoff = 3.0;  // truncation point of the Gaussian kernel

  static KernelSpec epanechnikov() { return {}; }
  static KernelSpec gaussian_truncated(double c) {
    if (!(c > 0.0)) throw Error(ErrorCode::kInvalidArgument, "truncation point must be positive");
    return {Kind::kGaussianTruncated, c};
  }

  [[nodiscard]] double support() const { return kind == Kind::kEpanechnikov ? 1.0 : cutoff; }

  [[nodiscard]] double operator()(double u) const {
    if (kind == Kind::kEpanechnikov) {
      return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    }
    if (std::abs(u) > cutoff) return 0.0;
    return detail::normal_pdf(u) / mass();
  }

  /// Integral of K^2.
  [[nodiscard]] double squared_norm() const {
    if (kind == Kind::kEpanechnikov) return 0.6;
    const double z = mass();
    // int_{-c}^{c} phi(u)^2 du = (2 Phi(c sqrt 2) - 1) / (2 sqrt pi)
    const double inner = std::erf(cutoff) / (2.0 * std::sqrt(M_PI));
    return inner / (z * z);
  }

  [[nodiscard]] std::string name() const {
    if (kind == Kind::kEpanechnikov) return "EPANECHNIKOV";
    return "GAUSSIAN_TRUNCATED(" + std::to_string(cutoff) + ")";
  }

 private:
  [[nodiscard]] double mass() const { return std::erf(cutoff / std::sqrt(2.0)); }
};

struct EstimateReport {
  double x_eval = 0.0;
  double h = 0.0;
  double f_hat = 0.0;
  double sum_k = 0.0;  // S_n(K_{x,h}) = sum_t K((X_t - x) / h) / h
  std::size_t t_c = 0;
  double p_hat_c = 0.0;
  std::optional<double> studentized;
};

inline constexpr double kDefaultWindowHalfwidth = 2.5;

inline Interval default_window(double x_eval) {
  return {x_eval - kDefaultWindowHalfwidth, x_eval + kDefaultWindowHalfwidth};
}

namespace detail {

inline void check_pairs(const std::vector<double>& x, const std::vector<double>& z) {
  if (x.size() != z.size()) throw Error(ErrorCode::kInvalidArgument, "x and z differ in length");
  if (x.empty()) throw Error(ErrorCode::kInvalidArgument, "empty data");
}

inline void check_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::kInvalidArgument, "bandwidth must be positive");
  }
}

inline std::size_t count_in(const std::vector<double>& x, const Interval& c) {
  return static_cast<std::size_t>(
      std::count_if(x.begin(), x.end(), [&](double v) { return c.contains(v); }));
}

// Sum of K((X_t - x) / h) without the 1/h factor.
inline double kernel_mass(const std::vector<double>& x, double x_eval, double h,
                          const KernelSpec& kernel) {
  double total = 0.0;
  for (double v : x) total += kernel((v - x_eval) / h);
  return total;
}

}  // namespace detail

/// f_hat(x) = sum Z_t K_{x,h}(X_t) / sum K_{x,h}(X_t), with t_c and p_hat_c
/// reported for the window (default [x - 2.5, x + 2.5]).
inline EstimateReport nw_estimate(const std::vector<double>& x, const std::vector<double>& z,
                                  double x_eval, double h,
                                  const KernelSpec& kernel = KernelSpec::epanechnikov(),
                                  std::optional<Interval> window = std::nullopt) {
  detail::check_pairs(x, z);
  detail::check_bandwidth(h);
  double mass = 0.0;
  double weighted = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double k = kernel((x[t] - x_eval) / h);
    if (k > 0.0) {
      mass += k;
      weighted += k * z[t];
    }
  }
  if (mass <= 0.0) {
    throw Error(ErrorCode::kEmptyNeighborhood, "no observations within bandwidth of x");
  }
  EstimateReport report;
  report.x_eval = x_eval;
  report.h = h;
  report.f_hat = weighted / mass;
  report.sum_k = mass / h;
  report.t_c = detail::count_in(x, window.value_or(default_window(x_eval)));
  if (report.t_c > 0) report.p_hat_c = report.sum_k / static_cast<double>(report.t_c);
  return report;
}

/// h = c0 (T_C(n) p_hat_C(x))^{-1/5}, where the pilot p_hat_C uses the
/// reference bandwidth width(C) / 10. Since T_C p_hat_C = S_n(K_{x,h_ref}),
/// only the pilot kernel sum enters.
inline double local_bandwidth(const std::vector<double>& x, double x_eval, const Interval& c,
                              double c0, const KernelSpec& kernel = KernelSpec::epanechnikov()) {
  if (!(c0 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "c0 must be positive");
  if (!(c.width() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "window must have positive width");
  const std::size_t t_c = detail::count_in(x, c);
  if (t_c == 0) throw Error(ErrorCode::kEmptyOccupation, "no observations in C");
  const double h_ref = c.width() / 10.0;
  const double pilot = detail::kernel_mass(x, x_eval, h_ref, kernel) / h_ref;
  if (!(pilot > 0.0)) {
    throw Error(ErrorCode::kEmptyNeighborhood, "pilot density vanishes at x");
  }
  return c0 * std::pow(pilot, -0.2);
}

/// Leave-one-out choice of c0 for the local rule. Each point t is predicted
/// with h_t = c0 * S_t^{-1/5} from the pilot sum S_t around X_t (window
/// X_t -/+ window_halfwidth). Losses are averaged over the points whose
/// leave-one-out neighborhood is nonempty for every candidate, so all
/// candidates are scored on the same set. Ties go to the smaller c0.
inline double cv_constant(const std::vector<double>& x, const std::vector<double>& z,
                          std::vector<double> grid,
                          const KernelSpec& kernel = KernelSpec::epanechnikov(),
                          double window_halfwidth = kDefaultWindowHalfwidth) {
  detail::check_pairs(x, z);
  if (x.size() < 20) throw Error(ErrorCode::kInvalidArgument, "cross-validation needs n >= 20");
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty c0 grid");
  for (double c0 : grid) {
    if (!(c0 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "c0 candidates must be positive");
  }
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return grid.front();

  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(n), zs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    zs[i] = z[order[i]];
  }
  // Kernel sum over sorted data restricted to |X_s - center| <= radius.
  auto window_sum = [&](double center, double h, std::size_t skip, double* weighted) {
    const double radius = kernel.support() * h;
    auto lo = static_cast<std::size_t>(
        std::lower_bound(xs.begin(), xs.end(), center - radius) - xs.begin());
    double mass = 0.0;
    double wz = 0.0;
    for (std::size_t s = lo; s < n && xs[s] <= center + radius; ++s) {
      if (s == skip) continue;
      const double k = kernel((xs[s] - center) / h);
      mass += k;
      wz += k * zs[s];
    }
    if (weighted != nullptr) *weighted = wz;
    return mass;
  };

  const double h_ref = 2.0 * window_halfwidth / 10.0;
  std::vector<double> pilot(n);
  for (std::size_t t = 0; t < n; ++t) {
    pilot[t] = window_sum(xs[t], h_ref, n, nullptr) / h_ref;
  }

  const std::size_t m = grid.size();
  std::vector<std::vector<double>> residual(m, std::vector<double>(n, 0.0));
  std::vector<bool> usable(n, true);
  for (std::size_t g = 0; g < m; ++g) {
    for (std::size_t t = 0; t < n; ++t) {
      if (!usable[t]) continue;
      const double h = grid[g] * std::pow(pilot[t], -0.2);
      double weighted = 0.0;
      const double mass = window_sum(xs[t], h, t, &weighted);
      if (mass <= 0.0) {
        usable[t] = false;
        continue;
      }
      const double r = zs[t] - weighted / mass;
      residual[g][t] = r * r;
    }
  }
  const auto used = static_cast<std::size_t>(std::count(usable.begin(), usable.end(), true));
  if (used == 0) {
    throw Error(ErrorCode::kAllNeighborhoodsEmpty, "every leave-one-out neighborhood is empty");
  }
  double best_loss = std::numeric_limits<double>::infinity();
  double best = grid.front();
  for (std::size_t g = 0; g < m; ++g) {
    double loss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (usable[t]) loss += residual[g][t];
    }
    loss /= static_cast<double>(used);
    if (loss < best_loss) {
      best_loss = loss;
      best = grid[g];
    }
  }
  return best;
}

/// (h sum_t K_{x,h}(X_t) / ||K||^2)^{1/2} (f_hat(x) - f_true).
inline double studentized(const std::vector<double>& x, const std::vector<double>& z,
                          double x_eval, double h, const KernelSpec& kernel, double f_true) {
  const auto report = nw_estimate(x, z, x_eval, h, kernel);
  return std::sqrt(h * report.sum_k / kernel.squared_norm()) * (report.f_hat - f_true);
}

/// Observed value maximizing the kernel density estimate over the data
/// points; maxima equal to within a relative 1e-12 resolve to the leftmost.
inline double modal_value(const std::vector<double>& x,
                          const KernelSpec& kernel = KernelSpec::epanechnikov(),
                          double pilot_h = 1.0) {
  if (x.empty()) throw Error(ErrorCode::kInvalidArgument, "empty data");
  detail::check_bandwidth(pilot_h);
  std::vector<double> xs(x);
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  const double radius = kernel.support() * pilot_h;
  double best_value = xs.front();
  double best_density = -1.0;
  std::size_t lo = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0 && xs[t] == xs[t - 1]) continue;  // same point, same density
    while (xs[lo] < xs[t] - radius) ++lo;
    double density = 0.0;
    for (std::size_t s = lo; s < n && xs[s] <= xs[t] + radius; ++s) {
      density += kernel((xs[s] - xs[t]) / pilot_h);
    }
    if (density > best_density * (1.0 + 1e-12)) {
      best_density = density;
      best_value = xs[t];
    }
  }
  return best_value;
}

}  // namespace nullrec
