#pragma once

// Generative models for the simulated cointegration systems Z_t = f(X_t) + W_t
// with a random-walk (or finite-chain) regressor X_t.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "nullrec/error.hpp"
#include "nullrec/finite_model.hpp"
#include "nullrec/rng.hpp"

namespace nullrec {

enum class Family { kIndep, kSharedInnovation, kAr1Linked, kMaLinked, kFiniteProduct };

inline std::string to_string(Family family) {
  switch (family) {
    case Family::kIndep: return "INDEP";
    case Family::kSharedInnovation: return "SHARED_INNOVATION";
    case Family::kAr1Linked: return "AR1_LINKED";
    case Family::kMaLinked: return "MA_LINKED";
    case Family::kFiniteProduct: return "FINITE_PRODUCT";
  }
  return "UNKNOWN";
}

inline Family family_from_string(const std::string& name) {
  if (name == "INDEP") return Family::kIndep;
  if (name == "SHARED_INNOVATION") return Family::kSharedInnovation;
  if (name == "AR1_LINKED") return Family::kAr1Linked;
  if (name == "MA_LINKED") return Family::kMaLinked;
  if (name == "FINITE_PRODUCT") return Family::kFiniteProduct;
  throw Error(ErrorCode::kUnknownProcessFamily, "unknown family '" + name + "'");
}

/// f(x) = slope * x + intercept, or piecewise-linear interpolation of a
/// table with flat extrapolation.
struct TransferFunction {
  enum class Kind { kLinear, kTable };
  Kind kind = Kind::kLinear;
  double slope = 1.0;
  double intercept = 0.0;
  std::vector<double> xs;
  std::vector<double> ys;

  static TransferFunction linear(double slope, double intercept) {
    return {Kind::kLinear, slope, intercept, {}, {}};
  }

  static TransferFunction table(std::vector<double> xs, std::vector<double> ys) {
    if (xs.empty() || xs.size() != ys.size() || !std::is_sorted(xs.begin(), xs.end())) {
      throw Error(ErrorCode::kInvalidSpec, "table transfer function needs sorted, matching x/y");
    }
    return {Kind::kTable, 0.0, 0.0, std::move(xs), std::move(ys)};
  }

  [[nodiscard]] double operator()(double x) const {
    if (kind == Kind::kLinear) return slope * x + intercept;
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    const std::size_t lo = hi - 1;
    const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + w * (ys[hi] - ys[lo]);
  }
};

struct ProcessParams {
  double sigma_e = 1.0;    // scale of the regressor innovation e_t
  double sigma_eps = 1.0;  // INDEP: W_t = sigma_eps * eps_t
  double weight_e = std::sqrt(0.5);    // SHARED_INNOVATION
  double weight_eps = std::sqrt(0.5);  // SHARED_INNOVATION
  double a = 0.5;        // AR1_LINKED: W_t = a W_{t-1} + b e_t + u_t
  double b = 1.0;
  double sigma_u = 1.0;
  // MA_LINKED: W_t = m0 e_t + m1 e_{t-1} + m2 eps_{t-1}
  std::array<double, 3> ma_weights = {1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0),
                                      1.0 / std::sqrt(3.0)};
};

struct ProcessSpec {
  Family family = Family::kIndep;
  TransferFunction f;
  ProcessParams params;
  double x0 = 0.0;
  std::optional<FiniteMarkovModel> x_chain;
  std::optional<FiniteMarkovModel> w_chain;
};

inline void validate(const ProcessSpec& spec) {
  const auto& p = spec.params;
  if (!(p.sigma_e >= 0.0) || !(p.sigma_eps >= 0.0) || !(p.sigma_u >= 0.0)) {
    throw Error(ErrorCode::kInvalidSpec, "noise scales must be nonnegative");
  }
  if (spec.family == Family::kAr1Linked && !(std::abs(p.a) < 1.0)) {
    throw Error(ErrorCode::kInvalidSpec, "AR1_LINKED requires |a| < 1");
  }
  if (spec.family == Family::kFiniteProduct && (!spec.x_chain || !spec.w_chain)) {
    throw Error(ErrorCode::kInvalidSpec, "FINITE_PRODUCT requires x_chain and w_chain");
  }
  if (!std::isfinite(spec.x0)) throw Error(ErrorCode::kInvalidSpec, "x0 must be finite");
}

/// Coefficients of W' = a W + b xi + c zeta, where xi is the standardized
/// regressor innovation (X' = X + sigma_e xi) and zeta an independent N(0,1).
struct LinearWiring {
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;
};

inline std::optional<LinearWiring> linear_wiring(const ProcessSpec& spec) {
  const auto& p = spec.params;
  switch (spec.family) {
    case Family::kIndep: return LinearWiring{0.0, 0.0, p.sigma_eps};
    case Family::kSharedInnovation: return LinearWiring{0.0, p.weight_e, p.weight_eps};
    case Family::kAr1Linked: return LinearWiring{p.a, p.b * p.sigma_e, p.sigma_u};
    default: return std::nullopt;
  }
}

namespace detail {

inline std::size_t sample_row(const Matrix& p, std::size_t row, double u) {
  const auto r = static_cast<Eigen::Index>(row);
  double cumulative = 0.0;
  const Eigen::Index last = p.cols() - 1;
  for (Eigen::Index j = 0; j < last; ++j) {
    cumulative += p(r, j);
    if (u < cumulative) return static_cast<std::size_t>(j);
  }
  return static_cast<std::size_t>(last);
}

inline std::size_t sample_vector(const Vector& v, double u) {
  double cumulative = 0.0;
  const Eigen::Index last = v.size() - 1;
  for (Eigen::Index j = 0; j < last; ++j) {
    cumulative += v(j);
    if (u < cumulative) return static_cast<std::size_t>(j);
  }
  return static_cast<std::size_t>(last);
}

}  // namespace detail

/// Step-by-step path of (X_t, W_t). generate() is a loop over this class, so
/// an incrementally extended path is bit-identical to a generated prefix.
///
/// Start conventions: X_0 = x0 for every family except AR1_LINKED, which
/// starts from the pre-sample values X_{-1} = x0, W_{-1} = 0 so that
/// E(W_t X_t) = b sigma_e^2 (1 - a^{t+1}) / (1 - a) holds from t = 0.
/// Innovations referenced at t = 0 that have no effect on X (e_0 in the
/// SHARED_INNOVATION and MA_LINKED wirings, e_{-1}, eps_{-1}) are drawn fresh
/// so that W_0 has its stationary law.
class PathGenerator {
 public:
  PathGenerator(const ProcessSpec& spec, std::uint64_t seed)
      : spec_(spec), engine_(make_engine(seed, Stream::kPath)) {
    validate(spec_);
    const auto& p = spec_.params;
    switch (spec_.family) {
      case Family::kIndep:
        x_ = spec_.x0;
        w_ = p.sigma_eps * normal();
        break;
      case Family::kSharedInnovation:
        x_ = spec_.x0;
        e_ = normal();
        w_ = p.weight_e * e_ + p.weight_eps * normal();
        break;
      case Family::kAr1Linked:
        e_ = p.sigma_e * normal();
        x_ = spec_.x0 + e_;
        w_ = p.b * e_ + p.sigma_u * normal();
        break;
      case Family::kMaLinked: {
        x_ = spec_.x0;
        const double e_prev = normal();
        const double eps_prev = normal();
        e_ = normal();
        eps_ = normal();
        w_ = p.ma_weights[0] * e_ + p.ma_weights[1] * e_prev + p.ma_weights[2] * eps_prev;
        break;
      }
      case Family::kFiniteProduct:
        x_state_ = detail::sample_vector(spec_.x_chain->small_measure(), uniform());
        w_state_ = detail::sample_vector(spec_.w_chain->small_measure(), uniform());
        x_ = static_cast<double>(x_state_);
        w_ = static_cast<double>(w_state_);
        break;
    }
  }

  [[nodiscard]] double x() const { return x_; }
  [[nodiscard]] double w() const { return w_; }
  /// Current regressor innovation e_t (the extra Markov coordinate of MA_LINKED).
  [[nodiscard]] double innovation() const { return e_; }
  [[nodiscard]] std::size_t x_state() const { return x_state_; }
  [[nodiscard]] std::size_t w_state() const { return w_state_; }

  void advance() {
    const auto& p = spec_.params;
    switch (spec_.family) {
      case Family::kIndep:
        x_ += p.sigma_e * normal();
        w_ = p.sigma_eps * normal();
        break;
      case Family::kSharedInnovation: {
        const double xi = normal();
        x_ += p.sigma_e * xi;
        e_ = xi;
        w_ = p.weight_e * xi + p.weight_eps * normal();
        break;
      }
      case Family::kAr1Linked:
        e_ = p.sigma_e * normal();
        x_ += e_;
        w_ = p.a * w_ + p.b * e_ + p.sigma_u * normal();
        break;
      case Family::kMaLinked: {
        const double e_prev = e_;
        const double eps_prev = eps_;
        e_ = normal();
        eps_ = normal();
        x_ += p.sigma_e * e_;
        w_ = p.ma_weights[0] * e_ + p.ma_weights[1] * e_prev + p.ma_weights[2] * eps_prev;
        break;
      }
      case Family::kFiniteProduct:
        x_state_ = detail::sample_row(spec_.x_chain->transition(), x_state_, uniform());
        w_state_ = detail::sample_row(spec_.w_chain->transition(), w_state_, uniform());
        x_ = static_cast<double>(x_state_);
        w_ = static_cast<double>(w_state_);
        break;
    }
  }

 private:
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  const ProcessSpec& spec_;
  Engine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  double x_ = 0.0;
  double w_ = 0.0;
  double e_ = 0.0;
  double eps_ = 0.0;
  std::size_t x_state_ = 0;
  std::size_t w_state_ = 0;
};

struct Dataset {
  std::vector<double> x;
  std::vector<double> w;
  std::vector<double> z;
};

/// Path of length n + 1 with z[t] = f(x[t]) + w[t]; deterministic in seed.
inline Dataset generate(const ProcessSpec& spec, std::size_t n, std::uint64_t seed) {
  PathGenerator gen(spec, seed);
  Dataset out;
  out.x.reserve(n + 1);
  out.w.reserve(n + 1);
  out.z.reserve(n + 1);
  for (std::size_t t = 0; t <= n; ++t) {
    if (t > 0) gen.advance();
    out.x.push_back(gen.x());
    out.w.push_back(gen.w());
    out.z.push_back(spec.f(gen.x()) + gen.w());
  }
  return out;
}

/// theta_t = E(W_t X_t) = b sigma_e^2 (1 - a^{t+1}) / (1 - a) for AR1_LINKED
/// started at x0 = 0.
inline double theoretical_cross_moment(const ProcessSpec& spec, std::size_t t) {
  if (spec.family != Family::kAr1Linked) {
    throw Error(ErrorCode::kWrongFamily, "cross moment is defined for AR1_LINKED only");
  }
  validate(spec);
  const auto& p = spec.params;
  const double geometric = 1.0 - std::pow(p.a, static_cast<double>(t + 1));
  return p.b * p.sigma_e * p.sigma_e * geometric / (1.0 - p.a);
}

struct CorrPoint {
  std::size_t t = 0;
  double corr = 0.0;
  double corr_se = 0.0;
  double cross_mean = 0.0;  // sample mean of W_t X_t
  double cross_se = 0.0;
};

/// Monte Carlo corr(X_t, W_t) at each requested t over independent paths
/// seeded derive_seed(seed, r).
inline std::vector<CorrPoint> empirical_corr_decay(const ProcessSpec& spec,
                                                   const std::vector<std::size_t>& times,
                                                   std::size_t reps, std::uint64_t seed) {
  if (spec.family != Family::kAr1Linked) {
    throw Error(ErrorCode::kWrongFamily, "correlation decay is defined for AR1_LINKED only");
  }
  if (times.empty() || reps < 2) throw Error(ErrorCode::kInvalidArgument, "need times and reps >= 2");
  const std::size_t horizon = *std::max_element(times.begin(), times.end());
  const std::size_t k = times.size();
  std::vector<double> sx(k), sw(k), sxx(k), sww(k), sxw(k), sxw2(k);
  for (std::size_t r = 0; r < reps; ++r) {
    PathGenerator gen(spec, derive_seed(seed, r));
    std::size_t t = 0;
    for (std::size_t idx = 0; idx < k; ++idx) {
      while (t < times[idx]) {
        gen.advance();
        ++t;
      }
      if (t != times[idx]) {
        throw Error(ErrorCode::kInvalidArgument, "times must be nondecreasing");
      }
      const double x = gen.x();
      const double w = gen.w();
      sx[idx] += x;
      sw[idx] += w;
      sxx[idx] += x * x;
      sww[idx] += w * w;
      sxw[idx] += x * w;
      sxw2[idx] += (x * w) * (x * w);
    }
    (void)horizon;
  }
  const double n = static_cast<double>(reps);
  std::vector<CorrPoint> out;
  for (std::size_t idx = 0; idx < k; ++idx) {
    CorrPoint point;
    point.t = times[idx];
    const double mx = sx[idx] / n;
    const double mw = sw[idx] / n;
    const double cov = sxw[idx] / n - mx * mw;
    const double vx = sxx[idx] / n - mx * mx;
    const double vw = sww[idx] / n - mw * mw;
    point.corr = (vx > 0.0 && vw > 0.0) ? cov / std::sqrt(vx * vw) : 0.0;
    point.corr_se = (1.0 - point.corr * point.corr) / std::sqrt(n - 1.0);
    point.cross_mean = sxw[idx] / n;
    const double var_xw = sxw2[idx] / n - point.cross_mean * point.cross_mean;
    point.cross_se = std::sqrt(std::max(0.0, var_xw) / (n - 1.0));
    out.push_back(point);
  }
  return out;
}

inline ProcessSpec spec_from_json(const nlohmann::json& doc) {
  try {
    ProcessSpec spec;
    spec.family = family_from_string(doc.at("family").get<std::string>());
    if (doc.contains("f")) {
      const auto& f = doc.at("f");
      const auto kind = f.value("kind", std::string("LINEAR"));
      if (kind == "LINEAR" || kind == "linear") {
        spec.f = TransferFunction::linear(detail::json_real(f.value("a", nlohmann::json(1.0))),
                                          detail::json_real(f.value("b", nlohmann::json(0.0))));
      } else if (kind == "TABLE" || kind == "table") {
        std::vector<double> xs, ys;
        for (const auto& v : f.at("x")) xs.push_back(detail::json_real(v));
        for (const auto& v : f.at("y")) ys.push_back(detail::json_real(v));
        spec.f = TransferFunction::table(std::move(xs), std::move(ys));
      } else {
        throw Error(ErrorCode::kInvalidSpec, "unknown transfer function kind '" + kind + "'");
      }
    }
    if (doc.contains("params")) {
      const auto& p = doc.at("params");
      auto read = [&](const char* key, double& target) {
        if (p.contains(key)) target = detail::json_real(p.at(key));
      };
      read("sigma_e", spec.params.sigma_e);
      read("sigma_eps", spec.params.sigma_eps);
      read("weight_e", spec.params.weight_e);
      read("weight_eps", spec.params.weight_eps);
      read("a", spec.params.a);
      read("b", spec.params.b);
      read("sigma_u", spec.params.sigma_u);
      if (p.contains("ma_weights")) {
        const auto& mw = p.at("ma_weights");
        if (mw.size() != 3) throw Error(ErrorCode::kInvalidSpec, "ma_weights needs 3 entries");
        for (std::size_t i = 0; i < 3; ++i) spec.params.ma_weights[i] = detail::json_real(mw.at(i));
      }
    }
    if (doc.contains("x0")) spec.x0 = detail::json_real(doc.at("x0"));
    if (doc.contains("x_chain")) spec.x_chain = model_from_json(doc.at("x_chain"));
    if (doc.contains("w_chain")) spec.w_chain = model_from_json(doc.at("w_chain"));
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, e.what());
  }
}

inline nlohmann::json spec_to_json(const ProcessSpec& spec) {
  nlohmann::json doc;
  doc["family"] = to_string(spec.family);
  if (spec.f.kind == TransferFunction::Kind::kLinear) {
    doc["f"] = {{"kind", "LINEAR"}, {"a", spec.f.slope}, {"b", spec.f.intercept}};
  } else {
    doc["f"] = {{"kind", "TABLE"}, {"x", spec.f.xs}, {"y", spec.f.ys}};
  }
  const auto& p = spec.params;
  doc["params"] = {{"sigma_e", p.sigma_e}, {"sigma_eps", p.sigma_eps}, {"weight_e", p.weight_e},
                   {"weight_eps", p.weight_eps}, {"a", p.a},       {"b", p.b},
                   {"sigma_u", p.sigma_u},   {"ma_weights", p.ma_weights}};
  doc["x0"] = spec.x0;
  if (spec.x_chain) doc["x_chain"] = model_to_json(*spec.x_chain);
  if (spec.w_chain) doc["w_chain"] = model_to_json(*spec.w_chain);
  return doc;
}

inline ProcessSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigParse, "cannot open spec file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, path + ": " + e.what());
  }
  return spec_from_json(doc);
}

}  // namespace nullrec
