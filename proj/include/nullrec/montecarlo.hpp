#pragma once

// Replicated studentized-statistic experiments and their normality
// diagnostics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nullrec/error.hpp"
#include "nullrec/estimator.hpp"
#include "nullrec/processes.hpp"
#include "nullrec/rng.hpp"

namespace nullrec {

// ---------------------------------------------------------------- statistics

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// sup_x |F_m(x) - Phi(x)| for the empirical CDF F_m of values.
inline double ks_normal(std::vector<double> values) {
  if (values.size() < 10) throw Error(ErrorCode::kTooFewValues, "KS needs at least 10 values");
  std::sort(values.begin(), values.end());
  const auto m = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = normal_cdf(values[i]);
    d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

/// Kolmogorov survival function Q(lambda) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct TwoSampleKs {
  double distance = 0.0;
  double p_value = 1.0;
};

inline TwoSampleKs ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kTooFewValues, "empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

struct SampleMoments {
  double mean = 0.0;
  double sd = 0.0;
};

inline SampleMoments sample_moments(const std::vector<double>& v) {
  SampleMoments out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return out;
}

// ------------------------------------------------------------------ threads

/// --threads value, else NULLREC_THREADS, else the hardware count.
inline unsigned resolve_threads(std::optional<unsigned> requested = std::nullopt) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("NULLREC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [begin, end) on up to `threads` workers. fn must only
/// write to slot i of its outputs; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, unsigned threads, Fn&& fn) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1U, threads), count));
  if (workers == 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < end; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = end;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ----------------------------------------------------------------- protocol

enum class ProtocolMode { kFixedPoint, kModal };

struct BandwidthRule {
  enum class Kind { kLocal, kFixed };
  Kind kind = Kind::kLocal;
  double c0 = 1.0;
  double h = 0.5;
};

struct CltProtocol {
  std::string id = "protocol";
  ProtocolMode mode = ProtocolMode::kModal;
  // FIXED_POINT
  double x_eval = 0.0;
  Interval window{-2.5, 2.5};
  // Local-observation target (FIXED_POINT) or path length n (MODAL), one run each.
  std::vector<std::size_t> sizes;
  ProcessSpec process;
  std::size_t reps = 1000;
  /// When set, replications run in index order until this many are admitted
  /// (at most `reps` are attempted).
  std::optional<std::size_t> admit_target;
  KernelSpec kernel;
  BandwidthRule bandwidth;
  std::uint64_t base_seed = 1;
  std::size_t max_path_length = 1'000'000;
  double modal_pilot_h = 1.0;
};

inline void validate(const CltProtocol& p) {
  if (p.reps < 1) throw Error(ErrorCode::kInvalidSpec, "reps must be >= 1");
  if (p.sizes.empty()) throw Error(ErrorCode::kInvalidSpec, "protocol needs at least one size");
  for (auto s : p.sizes) {
    if (s == 0) throw Error(ErrorCode::kInvalidSpec, "sizes must be positive");
  }
  if (p.mode == ProtocolMode::kFixedPoint) {
    if (!(p.window.width() > 0.0)) throw Error(ErrorCode::kInvalidSpec, "window must be nonempty");
    if (!p.window.contains(p.x_eval)) {
      throw Error(ErrorCode::kInvalidSpec, "x_eval must lie in the window");
    }
  }
  if (p.bandwidth.kind == BandwidthRule::Kind::kLocal && !(p.bandwidth.c0 > 0.0)) {
    throw Error(ErrorCode::kInvalidSpec, "c0 must be positive");
  }
  if (p.bandwidth.kind == BandwidthRule::Kind::kFixed && !(p.bandwidth.h > 0.0)) {
    throw Error(ErrorCode::kInvalidSpec, "fixed h must be positive");
  }
  if (!(p.modal_pilot_h > 0.0)) throw Error(ErrorCode::kInvalidSpec, "modal_pilot_h must be positive");
  if (p.admit_target && *p.admit_target == 0) {
    throw Error(ErrorCode::kInvalidSpec, "admit_target must be positive");
  }
  validate(p.process);
}

inline nlohmann::json protocol_to_json(const CltProtocol& p) {
  nlohmann::json doc;
  doc["id"] = p.id;
  doc["mode"] = p.mode == ProtocolMode::kFixedPoint ? "FIXED_POINT" : "MODAL";
  if (p.mode == ProtocolMode::kFixedPoint) {
    doc["x_eval"] = p.x_eval;
    doc["window"] = {p.window.lo, p.window.hi};
  }
  doc["sizes"] = p.sizes;
  doc["process"] = spec_to_json(p.process);
  doc["reps"] = p.reps;
  if (p.admit_target) doc["admit_target"] = *p.admit_target;
  if (p.kernel.kind == KernelSpec::Kind::kEpanechnikov) {
    doc["kernel"] = {{"kind", "EPANECHNIKOV"}};
  } else {
    doc["kernel"] = {{"kind", "GAUSSIAN_TRUNCATED"}, {"c", p.kernel.cutoff}};
  }
  if (p.bandwidth.kind == BandwidthRule::Kind::kLocal) {
    doc["bandwidth"] = {{"rule", "LOCAL"}, {"c0", p.bandwidth.c0}};
  } else {
    doc["bandwidth"] = {{"rule", "FIXED"}, {"h", p.bandwidth.h}};
  }
  doc["base_seed"] = p.base_seed;
  doc["max_path_length"] = p.max_path_length;
  doc["modal_pilot_h"] = p.modal_pilot_h;
  return doc;
}

inline CltProtocol protocol_from_json(const nlohmann::json& doc) {
  try {
    CltProtocol p;
    p.id = doc.value("id", std::string("protocol"));
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "FIXED_POINT") {
      p.mode = ProtocolMode::kFixedPoint;
      p.x_eval = detail::json_real(doc.at("x_eval"));
      const auto& w = doc.at("window");
      if (w.size() != 2) throw Error(ErrorCode::kConfigParse, "window needs [lo, hi]");
      p.window = {detail::json_real(w.at(0)), detail::json_real(w.at(1))};
    } else if (mode == "MODAL") {
      p.mode = ProtocolMode::kModal;
    } else {
      throw Error(ErrorCode::kConfigParse, "unknown mode '" + mode + "'");
    }
    if (doc.contains("sizes")) {
      p.sizes = doc.at("sizes").get<std::vector<std::size_t>>();
    } else if (doc.contains("size")) {
      p.sizes = {doc.at("size").get<std::size_t>()};
    }
    p.process = spec_from_json(doc.at("process"));
    p.reps = doc.value("reps", p.reps);
    if (doc.contains("admit_target")) p.admit_target = doc.at("admit_target").get<std::size_t>();
    if (doc.contains("kernel")) {
      const auto kind = doc.at("kernel").value("kind", std::string("EPANECHNIKOV"));
      if (kind == "EPANECHNIKOV") {
        p.kernel = KernelSpec::epanechnikov();
      } else if (kind == "GAUSSIAN_TRUNCATED") {
        p.kernel = KernelSpec::gaussian_truncated(
            detail::json_real(doc.at("kernel").value("c", nlohmann::json(3.0))));
      } else {
        throw Error(ErrorCode::kConfigParse, "unknown kernel '" + kind + "'");
      }
    }
    if (doc.contains("bandwidth")) {
      const auto& b = doc.at("bandwidth");
      const auto rule = b.value("rule", std::string("LOCAL"));
      if (rule == "LOCAL") {
        p.bandwidth.kind = BandwidthRule::Kind::kLocal;
        if (b.contains("c0")) p.bandwidth.c0 = detail::json_real(b.at("c0"));
      } else if (rule == "FIXED") {
        p.bandwidth.kind = BandwidthRule::Kind::kFixed;
        p.bandwidth.h = detail::json_real(b.at("h"));
      } else {
        throw Error(ErrorCode::kConfigParse, "unknown bandwidth rule '" + rule + "'");
      }
    }
    p.base_seed = doc.value("base_seed", p.base_seed);
    p.max_path_length = doc.value("max_path_length", p.max_path_length);
    if (doc.contains("modal_pilot_h")) p.modal_pilot_h = detail::json_real(doc.at("modal_pilot_h"));
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, e.what());
  }
}

inline CltProtocol load_protocol(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigParse, "cannot open protocol file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, path + ": " + e.what());
  }
  return protocol_from_json(doc);
}

// -------------------------------------------------------------- experiments

enum class RepStatus { kAdmitted, kEmpty, kGuard };

inline std::string to_string(RepStatus s) {
  switch (s) {
    case RepStatus::kAdmitted: return "admitted";
    case RepStatus::kEmpty: return "empty";
    case RepStatus::kGuard: return "guard";
  }
  return "unknown";
}

struct ReplicationRecord {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  std::size_t size = 0;
  double x_eval = std::nan("");
  double h = std::nan("");
  double sum_k = std::nan("");
  double f_hat = std::nan("");
  double studentized = std::nan("");
  RepStatus status = RepStatus::kAdmitted;
  std::size_t path_length = 0;  // number of observations used
  std::size_t local_count = 0;  // observations in the window at evaluation
};

struct CltExperimentResult {
  std::string protocol_id;
  std::size_t size = 0;
  /// Protocol echo without the size list; results are comparable iff equal.
  nlohmann::json signature;
  std::vector<ReplicationRecord> records;  // every attempted replication
  std::vector<double> values;              // studentized values of admitted ones
  std::size_t admitted = 0;
  std::size_t rejected_empty = 0;
  std::size_t rejected_guard = 0;
  /// NaN when fewer than 10 values were admitted.
  double ks_distance = std::nan("");
  double mean = 0.0;
  double sd = 0.0;
};

/// One replication: a pure function of (protocol, size, r).
inline ReplicationRecord run_replication(const CltProtocol& p, std::size_t size, std::size_t r) {
  ReplicationRecord rec;
  rec.rep = r;
  rec.seed = derive_seed(p.base_seed, r);
  rec.size = size;

  std::vector<double> x;
  std::vector<double> z;
  Interval window;
  if (p.mode == ProtocolMode::kFixedPoint) {
    window = p.window;
    PathGenerator gen(p.process, rec.seed);
    std::size_t local = 0;
    while (true) {
      const double xv = gen.x();
      x.push_back(xv);
      z.push_back(p.process.f(xv) + gen.w());
      if (window.contains(xv)) ++local;
      if (local >= size) break;
      if (x.size() >= p.max_path_length) {
        rec.status = RepStatus::kGuard;
        rec.path_length = x.size();
        rec.local_count = local;
        return rec;
      }
      gen.advance();
    }
    rec.x_eval = p.x_eval;
    rec.local_count = local;
  } else {
    auto data = generate(p.process, size, rec.seed);
    x = std::move(data.x);
    z = std::move(data.z);
    rec.x_eval = modal_value(x, p.kernel, p.modal_pilot_h);
    window = default_window(rec.x_eval);
    rec.local_count = detail::count_in(x, window);
  }
  rec.path_length = x.size();

  try {
    rec.h = p.bandwidth.kind == BandwidthRule::Kind::kLocal
                ? local_bandwidth(x, rec.x_eval, window, p.bandwidth.c0, p.kernel)
                : p.bandwidth.h;
    const auto report = nw_estimate(x, z, rec.x_eval, rec.h, p.kernel, window);
    rec.sum_k = report.sum_k;
    rec.f_hat = report.f_hat;
    const double f_true = p.process.f(rec.x_eval);
    rec.studentized =
        std::sqrt(rec.h * report.sum_k / p.kernel.squared_norm()) * (report.f_hat - f_true);
    rec.status = RepStatus::kAdmitted;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmptyNeighborhood && e.code() != ErrorCode::kEmptyOccupation) throw;
    rec.status = RepStatus::kEmpty;
  }
  return rec;
}

inline nlohmann::json protocol_signature(const CltProtocol& p) {
  auto doc = protocol_to_json(p);
  doc.erase("sizes");
  return doc;
}

/// Runs one size of the protocol. Replication r always uses seed
/// derive_seed(base_seed, r), so the result does not depend on `threads`.
inline CltExperimentResult run_clt(const CltProtocol& p, std::size_t size, unsigned threads = 1) {
  validate(p);
  CltExperimentResult result;
  result.protocol_id = p.id;
  result.size = size;
  result.signature = protocol_signature(p);

  if (!p.admit_target) {
    result.records.resize(p.reps);
    parallel_for(0, p.reps, threads,
                 [&](std::size_t r) { result.records[r] = run_replication(p, size, r); });
  } else {
    // Batches in index order; keep the shortest prefix reaching the target.
    const std::size_t target = *p.admit_target;
    std::size_t admitted = 0;
    while (admitted < target && result.records.size() < p.reps) {
      const std::size_t begin = result.records.size();
      const std::size_t missing = target - admitted;
      const std::size_t batch = std::min(p.reps - begin, missing + missing / 4 + threads);
      result.records.resize(begin + batch);
      parallel_for(begin, begin + batch, threads,
                   [&](std::size_t r) { result.records[r] = run_replication(p, size, r); });
      for (std::size_t r = begin; r < begin + batch; ++r) {
        if (result.records[r].status == RepStatus::kAdmitted && ++admitted == target) {
          result.records.resize(r + 1);
          break;
        }
      }
    }
  }

  for (const auto& rec : result.records) {
    switch (rec.status) {
      case RepStatus::kAdmitted:
        ++result.admitted;
        result.values.push_back(rec.studentized);
        break;
      case RepStatus::kEmpty: ++result.rejected_empty; break;
      case RepStatus::kGuard: ++result.rejected_guard; break;
    }
  }
  if (result.admitted == 0) {
    throw Error(ErrorCode::kAllRejected, "no replication admitted for size " + std::to_string(size));
  }
  const auto moments = sample_moments(result.values);
  result.mean = moments.mean;
  result.sd = moments.sd;
  if (result.values.size() >= 10) result.ks_distance = ks_normal(result.values);
  return result;
}

struct TrendRow {
  std::size_t size = 0;
  double ks_distance = 0.0;
  double sd = 0.0;
  double mean = 0.0;
  std::size_t admitted = 0;
};

struct TrendReport {
  std::vector<TrendRow> rows;  // ascending size
  /// Set when some smaller size has a strictly smaller KS distance than the
  /// largest size.
  bool violation = false;
  /// ks(largest size) - ks(smallest size).
  double ks_trend = 0.0;
};

inline TrendReport trend_report(const std::vector<CltExperimentResult>& results) {
  if (results.size() < 2) {
    throw Error(ErrorCode::kIncomparableProtocols, "trend needs at least two results");
  }
  for (const auto& r : results) {
    if (r.signature != results.front().signature) {
      throw Error(ErrorCode::kIncomparableProtocols, "results differ beyond their size");
    }
  }
  TrendReport report;
  for (const auto& r : results) report.rows.push_back({r.size, r.ks_distance, r.sd, r.mean, r.admitted});
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const TrendRow& a, const TrendRow& b) { return a.size < b.size; });
  const double last = report.rows.back().ks_distance;
  for (const auto& row : report.rows) {
    if (row.ks_distance < last) report.violation = true;
  }
  report.ks_trend = last - report.rows.front().ks_distance;
  return report;
}

}  // namespace nullrec
