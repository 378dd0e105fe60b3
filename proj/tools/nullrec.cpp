// Command-line front end: reads JSON configs, writes CSV artifacts plus a
// metadata.json describing the run.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nullrec/nullrec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nullrec;

namespace {

constexpr int kExitUnexpected = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBase = 10;  // ErrorCode k exits with 10 + k

int exit_code(ErrorCode code) { return kExitBase + static_cast<int>(code); }

void report_error(std::string_view kind, int code, const std::string& message) {
  json line{{"error", kind}, {"exit", code}, {"message", message}};
  std::cerr << line.dump() << '\n';
}

std::vector<double> parse_reals(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(detail::json_real(json(item)));
    } catch (const Error&) {
      throw Error(ErrorCode::kConfigParse, what + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kConfigParse, what + " is empty");
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vector state_function(const std::string& text, const FiniteMarkovModel& model, const char* what) {
  const auto values = parse_reals(text, what);
  if (values.size() != model.size()) {
    throw Error(ErrorCode::kConfigParse, std::string(what) + " needs " +
                                             std::to_string(model.size()) + " values");
  }
  return to_vector(values);
}

void prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIoFailure, "cannot create " + dir);
}

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

void write_metadata(const std::string& dir, const std::string& command, json config) {
  json meta;
  meta["command"] = command;
  meta["version"] = kVersion;
  meta["config"] = std::move(config);
  const auto path = join(dir, "metadata.json");
  std::ofstream out(path);
  out << meta.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path);
}

std::string cell(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

json kernel_json(const KernelSpec& k) {
  if (k.kind == KernelSpec::Kind::kEpanechnikov) return {{"kind", "EPANECHNIKOV"}};
  return {{"kind", "GAUSSIAN_TRUNCATED"}, {"c", k.cutoff}};
}

KernelSpec kernel_from_name(const std::string& name, double cutoff) {
  if (name == "EPANECHNIKOV") return KernelSpec::epanechnikov();
  if (name == "GAUSSIAN_TRUNCATED") return KernelSpec::gaussian_truncated(cutoff);
  throw Error(ErrorCode::kConfigParse, "unknown kernel " + name);
}

// Reads t,x,w,z columns as written by `simulate`.
Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigParse, "cannot open data file " + path);
  std::string line;
  std::getline(in, line);
  if (line != "t,x,w,z") throw Error(ErrorCode::kConfigParse, path + ": expected header t,x,w,z");
  Dataset data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string c;
    while (std::getline(row, c, ',')) cells.push_back(c);
    if (cells.size() != 4) throw Error(ErrorCode::kConfigParse, path + ": bad row '" + line + "'");
    try {
      data.x.push_back(detail::json_real(json(cells[1])));
      data.w.push_back(cells[2].empty() ? 0.0 : detail::json_real(json(cells[2])));
      data.z.push_back(detail::json_real(json(cells[3])));
    } catch (const Error&) {
      throw Error(ErrorCode::kConfigParse, path + ": bad row '" + line + "'");
    }
  }
  return data;
}

struct Options {
  std::string chain;
  std::string chain_w;
  std::string spec;
  std::string protocol;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> tol;
  std::size_t n = 1000;
  double halfwidth = 0.5;
  double w_halfwidth = 0.5;
  bool compound = false;
  std::string g;
  std::string f;
  int m = 4;
  long lags = 10;
  std::size_t terms = 2000;
  std::string x_eval;
  std::optional<double> h;
  double c0 = 1.0;
  std::string kernel = "EPANECHNIKOV";
  double cutoff = 3.0;
  std::optional<std::size_t> reps;
};

int cmd_simulate(const Options& o) {
  if (o.chain.empty() == o.spec.empty()) {
    throw Error(ErrorCode::kConfigParse, "simulate needs exactly one of --chain or --spec");
  }
  const std::uint64_t seed = o.seed.value_or(1);
  std::optional<FiniteMarkovModel> model;
  std::optional<ProcessSpec> spec;
  if (!o.chain.empty()) {
    model = load_model(o.chain);
  } else {
    spec = load_spec(o.spec);
  }
  SplitOptions split;
  split.halfwidth = o.halfwidth;
  split.w_halfwidth = o.w_halfwidth;
  split.compound = o.compound;
  const auto traj = model ? simulate_split(*model, o.n, seed) : simulate_split(*spec, o.n, seed, split);

  prepare_out(o.out);
  {
    CsvWriter csv(join(o.out, "trajectory.csv"), {"t", "x", "w", "y"});
    for (std::size_t t = 0; t < traj.x.size(); ++t) {
      csv.write_row({std::to_string(t), format_real(traj.x[t]),
                     traj.w ? format_real((*traj.w)[t]) : "", std::to_string(traj.y[t])});
    }
  }
  json config{{"n", o.n}, {"seed", seed}};
  if (model) {
    config["chain"] = model_to_json(*model);
  } else {
    CsvWriter csv(join(o.out, "dataset.csv"), {"t", "x", "w", "z"});
    for (std::size_t t = 0; t < traj.x.size(); ++t) {
      const double w = (*traj.w)[t];
      csv.write_row({std::to_string(t), format_real(traj.x[t]), format_real(w),
                     format_real(spec->f(traj.x[t]) + w)});
    }
    config["spec"] = spec_to_json(*spec);
    config["split"] = {{"halfwidth", o.halfwidth}, {"compound", o.compound},
                       {"w_halfwidth", o.w_halfwidth}};
  }
  config["regenerations"] = traj.tau.size();
  write_metadata(o.out, "simulate", config);
  std::cout << "regenerations " << traj.tau.size() << '\n';
  return 0;
}

int cmd_estimate(const Options& o) {
  if (o.data.empty() == o.spec.empty()) {
    throw Error(ErrorCode::kConfigParse, "estimate needs exactly one of --spec or --data");
  }
  if (o.x_eval.empty()) throw Error(ErrorCode::kConfigParse, "estimate needs --x");
  const auto points = parse_reals(o.x_eval, "--x");
  const auto kernel = kernel_from_name(o.kernel, o.cutoff);
  const std::uint64_t seed = o.seed.value_or(1);

  std::optional<ProcessSpec> spec;
  Dataset data;
  if (!o.spec.empty()) {
    spec = load_spec(o.spec);
    data = generate(*spec, o.n, seed);
  } else {
    data = read_dataset(o.data);
  }

  std::vector<EstimateReport> reports;
  for (double x : points) {
    const auto window = default_window(x);
    const double h = o.h ? *o.h : local_bandwidth(data.x, x, window, o.c0, kernel);
    auto report = nw_estimate(data.x, data.z, x, h, kernel, window);
    if (spec) {
      report.studentized =
          std::sqrt(h * report.sum_k / kernel.squared_norm()) * (report.f_hat - spec->f(x));
    }
    reports.push_back(report);
  }

  prepare_out(o.out);
  {
    CsvWriter csv(join(o.out, "curve.csv"),
                  {"x_eval", "f_hat", "h", "sum_k", "t_c", "p_hat_c", "studentized"});
    for (const auto& r : reports) {
      csv.write_row({format_real(r.x_eval), format_real(r.f_hat), format_real(r.h),
                     format_real(r.sum_k), std::to_string(r.t_c), format_real(r.p_hat_c),
                     cell(r.studentized)});
    }
  }
  json config{{"x_eval", points}, {"kernel", kernel_json(kernel)}};
  if (o.h) {
    config["bandwidth"] = {{"rule", "FIXED"}, {"h", *o.h}};
  } else {
    config["bandwidth"] = {{"rule", "LOCAL"}, {"c0", o.c0}};
  }
  if (spec) {
    config["spec"] = spec_to_json(*spec);
    config["n"] = o.n;
    config["seed"] = seed;
  } else {
    config["data"] = o.data;
  }
  write_metadata(o.out, "estimate", config);
  return 0;
}

int cmd_clt(const Options& o) {
  if (o.protocol.empty()) throw Error(ErrorCode::kConfigParse, "clt needs --protocol");
  auto p = load_protocol(o.protocol);
  if (o.seed) p.base_seed = *o.seed;
  if (o.reps) p.reps = *o.reps;
  validate(p);
  const unsigned threads = resolve_threads(o.threads);

  std::vector<CltExperimentResult> results;
  for (std::size_t size : p.sizes) {
    results.push_back(run_clt(p, size, threads));
    const auto& r = results.back();
    std::cerr << "size " << size << ": admitted " << r.admitted << ", empty " << r.rejected_empty
              << ", guard " << r.rejected_guard << ", ks " << format_real(r.ks_distance) << '\n';
  }

  prepare_out(o.out);
  for (const auto& r : results) {
    CsvWriter csv(join(o.out, "replications_" + std::to_string(r.size) + ".csv"),
                  {"rep", "seed", "n_or_local_count", "x_eval", "h", "sum_k", "f_hat",
                   "studentized", "status", "path_length"});
    for (const auto& rec : r.records) {
      const std::size_t count = p.mode == ProtocolMode::kFixedPoint ? rec.local_count : rec.size;
      csv.write_row({std::to_string(rec.rep), std::to_string(rec.seed), std::to_string(count),
                     format_real(rec.x_eval), format_real(rec.h), format_real(rec.sum_k),
                     format_real(rec.f_hat), format_real(rec.studentized), to_string(rec.status),
                     std::to_string(rec.path_length)});
    }
  }
  {
    CsvWriter csv(join(o.out, "summary.csv"),
                  {"protocol_id", "size", "reps", "admitted", "ks_distance", "mean", "sd"});
    for (const auto& r : results) {
      csv.write_row({r.protocol_id, std::to_string(r.size), std::to_string(r.records.size()),
                     std::to_string(r.admitted), format_real(r.ks_distance), format_real(r.mean),
                     format_real(r.sd)});
    }
  }
  json config{{"protocol", protocol_to_json(p)},
              {"seeds", {{"base_seed", p.base_seed},
                         {"rule", "replication r uses splitmix64 mix of (base_seed, r)"}}}};
  if (results.size() >= 2) {
    const auto trend = trend_report(results);
    config["trend"] = {{"ks_trend", trend.ks_trend}, {"violation", trend.violation}};
    if (trend.violation) std::cerr << "warning: largest size does not have the smallest ks\n";
  }
  write_metadata(o.out, "clt", config);
  return 0;
}

int cmd_moments_check(const Options& o) {
  if (o.chain.empty()) throw Error(ErrorCode::kConfigParse, "moments-check needs --chain");
  const auto model = load_model(o.chain);
  const Vector g = state_function(o.g, model, "--g");
  if (o.m < 1) throw Error(ErrorCode::kInvalidArgument, "--m must be positive");
  const double tol = o.tol.value_or(1e-10);

  struct Row {
    int m;
    double algebraic;
    double enumerated;
  };
  std::vector<Row> rows;
  for (int m = 1; m <= o.m; ++m) {
    const double a = block_moment(model, {g, m, std::nullopt}, tol);
    const double e = path_enumeration_moment(model, g, m).value;
    rows.push_back({m, a, e});
  }

  std::optional<CsvWriter> csv;
  if (!o.out.empty()) {
    prepare_out(o.out);
    csv.emplace(join(o.out, "moments.csv"),
                std::vector<std::string>{"m", "algebraic", "enumeration", "abs_diff"});
  }
  std::cout << "m,algebraic,enumeration,abs_diff\n";
  for (const auto& r : rows) {
    const std::vector<std::string> cells{std::to_string(r.m), format_real(r.algebraic),
                                         format_real(r.enumerated),
                                         format_real(std::abs(r.algebraic - r.enumerated))};
    if (csv) csv->write_row(cells);
    std::cout << cells[0] << ',' << cells[1] << ',' << cells[2] << ',' << cells[3] << '\n';
  }
  if (!o.out.empty()) {
    write_metadata(o.out, "moments-check",
                   {{"chain", model_to_json(model)},
                    {"g", std::vector<double>(g.begin(), g.end())},
                    {"m", o.m},
                    {"tol", tol}});
  }
  return 0;
}

int cmd_autocov(const Options& o) {
  if (o.chain.empty()) throw Error(ErrorCode::kConfigParse, "autocov needs --chain");
  const auto model = load_model(o.chain);
  const Vector g = state_function(o.g, model, "--g");
  const Vector f = o.f.empty() ? g : state_function(o.f, model, "--f");
  if (o.lags < 0) throw Error(ErrorCode::kInvalidArgument, "--lags must be nonnegative");
  const double tol = o.tol.value_or(1e-8);

  std::vector<double> gamma;
  for (long l = -o.lags; l <= o.lags; ++l) gamma.push_back(generalized_autocov(model, g, f, l));
  std::optional<SeriesValue> series;
  std::optional<BlockMeanVariance> block;
  if (o.f.empty()) {
    series = sigma2_from_series(model, g, o.terms, tol);
    block = block_mean_variance(model, g);
  }

  std::optional<CsvWriter> csv;
  if (!o.out.empty()) {
    prepare_out(o.out);
    csv.emplace(join(o.out, "autocov.csv"), std::vector<std::string>{"lag", "gamma"});
  }
  std::cout << "lag,gamma\n";
  for (long l = -o.lags; l <= o.lags; ++l) {
    const std::vector<std::string> cells{std::to_string(l),
                                         format_real(gamma[static_cast<std::size_t>(l + o.lags)])};
    if (csv) csv->write_row(cells);
    std::cout << cells[0] << ',' << cells[1] << '\n';
  }
  if (series) {
    std::cout << "sigma2_series " << format_real(series->value) << " tail_bound "
              << format_real(series->tail_bound) << " terms " << series->terms << '\n';
    std::cout << "sigma2_block " << format_real(block->variance) << '\n';
  }
  if (!o.out.empty()) {
    json config{{"chain", model_to_json(model)},
                {"g", std::vector<double>(g.begin(), g.end())},
                {"f", std::vector<double>(f.begin(), f.end())},
                {"lags", o.lags}};
    if (series) {
      config["sigma2_series"] = series->value;
      config["sigma2_tail_bound"] = series->tail_bound;
      config["sigma2_block"] = block->variance;
      config["terms"] = o.terms;
      config["tol"] = tol;
    }
    write_metadata(o.out, "autocov", config);
  }
  return 0;
}

int cmd_embedded(const Options& o) {
  if (o.chain.empty() || o.chain_w.empty()) {
    throw Error(ErrorCode::kConfigParse, "embedded needs --chain and --chain-w");
  }
  const auto x_model = load_model(o.chain);
  const auto w_model = load_model(o.chain_w);
  const double tol = o.tol.value_or(1e-12);
  const auto e = embedded_transition(x_model, w_model, tol);
  const Matrix& pt = e.p_tilde.entries;

  std::optional<CsvWriter> csv;
  if (!o.out.empty()) {
    prepare_out(o.out);
    csv.emplace(join(o.out, "embedded.csv"), std::vector<std::string>{"row", "col", "p"});
  }
  std::cout << "row,col,p\n";
  for (Eigen::Index i = 0; i < pt.rows(); ++i) {
    for (Eigen::Index j = 0; j < pt.cols(); ++j) {
      const std::vector<std::string> cells{std::to_string(i), std::to_string(j),
                                           format_real(pt(i, j))};
      if (csv) csv->write_row(cells);
      std::cout << cells[0] << ',' << cells[1] << ',' << cells[2] << '\n';
    }
  }
  std::cout << "terms " << e.coefficients.size() << " tail_bound " << format_real(e.tail_bound)
            << '\n';
  if (!o.out.empty()) {
    write_metadata(o.out, "embedded",
                   {{"x_chain", model_to_json(x_model)},
                    {"w_chain", model_to_json(w_model)},
                    {"tol", tol},
                    {"terms", e.coefficients.size()},
                    {"tail_bound", e.tail_bound},
                    {"atom_s", std::vector<double>(e.s.begin(), e.s.end())},
                    {"atom_nu", std::vector<double>(e.nu.begin(), e.nu.end())}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regeneration-based tools for nonparametric regression on null recurrent chains"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Base seed"); };
  auto add_out = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--out", o.out, "Output directory");
    if (required) opt->required();
  };

  auto* simulate = app.add_subcommand("simulate", "Split-chain trajectory (and dataset for a process)");
  simulate->add_option("--chain", o.chain, "Finite chain JSON");
  simulate->add_option("--spec", o.spec, "Process spec JSON");
  simulate->add_option("-n,--n", o.n, "Number of transitions");
  simulate->add_option("--halfwidth", o.halfwidth, "Small-set halfwidth for random walk X");
  simulate->add_option("--w-halfwidth", o.w_halfwidth, "Small-set halfwidth for W (compound)");
  simulate->add_flag("--compound", o.compound, "Split the joint (X, W) chain");
  add_seed(simulate);
  add_out(simulate, true);

  auto* estimate = app.add_subcommand("estimate", "Nadaraya-Watson estimate at given points");
  estimate->add_option("--spec", o.spec, "Process spec JSON to simulate from");
  estimate->add_option("--data", o.data, "Dataset CSV (t,x,w,z)");
  estimate->add_option("-n,--n", o.n, "Transitions to simulate with --spec");
  estimate->add_option("--x", o.x_eval, "Comma-separated evaluation points")->required();
  estimate->add_option("--bandwidth", o.h, "Fixed bandwidth h (default: local rule)");
  estimate->add_option("--c0", o.c0, "Constant of the local bandwidth rule");
  estimate->add_option("--kernel", o.kernel, "EPANECHNIKOV or GAUSSIAN_TRUNCATED");
  estimate->add_option("--cutoff", o.cutoff, "Truncation point of the Gaussian kernel");
  add_seed(estimate);
  add_out(estimate, true);

  auto* clt = app.add_subcommand("clt", "Replicated studentized-statistic experiment");
  clt->add_option("--protocol", o.protocol, "Protocol JSON")->required();
  clt->add_option("--threads", o.threads, "Worker threads (env NULLREC_THREADS)");
  clt->add_option("--reps", o.reps, "Override the replication count");
  add_seed(clt);
  add_out(clt, true);

  auto* moments = app.add_subcommand("moments-check", "Block moments: algebra vs path enumeration");
  moments->add_option("--chain", o.chain, "Finite chain JSON")->required();
  moments->add_option("--g", o.g, "Comma-separated g values")->required();
  moments->add_option("--m", o.m, "Highest moment order");
  moments->add_option("--tol", o.tol, "Series tolerance");
  add_out(moments, false);

  auto* autocov = app.add_subcommand("autocov", "Generalized autocovariances and sigma^2");
  autocov->add_option("--chain", o.chain, "Finite chain JSON")->required();
  autocov->add_option("--g", o.g, "Comma-separated g values")->required();
  autocov->add_option("--f", o.f, "Second function (default g)");
  autocov->add_option("--lags", o.lags, "Largest |lag| printed");
  autocov->add_option("--terms", o.terms, "Lags summed for sigma^2");
  autocov->add_option("--tol", o.tol, "Bound on the omitted tail");
  add_out(autocov, false);

  auto* embedded = app.add_subcommand("embedded", "Transition of W at the regenerations of X");
  embedded->add_option("--chain", o.chain, "X chain JSON")->required();
  embedded->add_option("--chain-w", o.chain_w, "W chain JSON")->required();
  embedded->add_option("--tol", o.tol, "Truncation tolerance");
  add_out(embedded, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("Usage", kExitUsage, e.what());
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*estimate) return cmd_estimate(o);
    if (*clt) return cmd_clt(o);
    if (*moments) return cmd_moments_check(o);
    if (*autocov) return cmd_autocov(o);
    if (*embedded) return cmd_embedded(o);
  } catch (const Error& e) {
    const int code = exit_code(e.code());
    report_error(to_string(e.code()), code, e.what());
    return code;
  } catch (const std::exception& e) {
    report_error("Unexpected", kExitUnexpected, e.what());
    return kExitUnexpected;
  }
  return kExitUnexpected;
}
