#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gibbsgof/gibbsgof.hpp"
#include "gibbsgof/io.hpp"

namespace gibbsgof::cli {

using nlohmann::json;

enum ExitCode : int { Ok = 0, ConfigError = 2, FitError = 3, Degenerate = 4, IoError = 5 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::InvalidMark:
    case ErrorKind::InvalidConfiguration: return IoError;
    case ErrorKind::FitFailure:
    case ErrorKind::Numeric: return FitError;
    case ErrorKind::DegenerateNormalization:
    case ErrorKind::CalibrationFailure: return Degenerate;
    default: return ConfigError;
  }
}

inline const std::set<std::string>& config_schema() {
  static const std::set<std::string> keys = {
      "model", "marks", "range", "range11", "range12", "range22", "hard_core", "disc_radius",
      "theta",
      "window.side", "window.guard", "window.dimension", "window.center",
      "estimation.theta0", "estimation.tol", "estimation.max_iter",
      "residual.h",
      "cov.delta", "cov.d_vee", "cov.subdomains",
      "test.name", "test.alpha",
      "sampler.seed", "sampler.sweeps", "sampler.replicates", "sampler.birth_fraction", "sampler.moves",
      "quadrature.resolution",
  };
  return keys;
}

struct Options {
  std::string command;
  std::string config;
  std::string input;
  std::string output;
  std::string cells;
  std::string stats;
  std::optional<std::string> test;
  std::optional<std::string> h;
  std::optional<long long> subdomains;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<long long> replicates;
  unsigned threads = 1;
};

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json to_json_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

/// Test functions from `raw`, `inverse`, `pearson` or `empty:r1,r2,...`.
template <std::size_t Dim>
std::vector<TestFunction<Dim>> parse_test_functions(const std::string& text) {
  const std::string t = io::trim(text);
  if (t == "raw") return {TestFunction<Dim>::raw()};
  if (t == "inverse") return {TestFunction<Dim>::inverse()};
  if (t == "pearson") return {TestFunction<Dim>::pearson()};
  if (t.rfind("empty:", 0) == 0) {
    std::vector<TestFunction<Dim>> hs;
    for (const auto& r : io::split(t.substr(6), ',')) {
      hs.push_back(TestFunction<Dim>::empty_space(io::parse_double(r, "residual.h")));
    }
    return hs;
  }
  fail(ErrorKind::Config, "residual.h: unknown test function '" + text + "'");
}

inline TestName parse_test_name(const std::string& s) {
  if (s == "t1") return TestName::T1;
  if (s == "t1tilde") return TestName::T1Tilde;
  if (s == "t2tilde") return TestName::T2Tilde;
  fail(ErrorKind::Config, "test.name: unknown test '" + s + "'");
}

class Runner {
 public:
  Runner(Options opt, io::KeyValueConfig cfg, std::ostream& out) : opt_(std::move(opt)), cfg_(std::move(cfg)), out_(out) {}

  int run() {
    const std::string model = cfg_.require_string("model");
    const long long dim = cfg_.get_int("window.dimension", 2);
    if (model == "area") {
      if (dim != 2) fail(ErrorKind::Config, "the area-interaction model is planar (window.dimension = 2)");
      return execute(AreaInteraction(cfg_.require_double("disc_radius")));
    }
    switch (dim) {
      case 1: return dispatch<1>(model);
      case 2: return dispatch<2>(model);
      case 3: return dispatch<3>(model);
      default: fail(ErrorKind::Config, "window.dimension must be 1, 2 or 3");
    }
  }

  std::string stage = "config";

 private:
  template <std::size_t Dim>
  int dispatch(const std::string& model) {
    if (model == "poisson") {
      std::vector<std::string> labels;
      if (cfg_.has("marks")) labels = io::split(cfg_.require_string("marks"), ',');
      return execute(PoissonModel<Dim>(labels.empty() ? MarkSet() : MarkSet::uniform(labels)));
    }
    if (model == "strauss2") {
      const double r = cfg_.get_double("range", -1.0);
      auto range = [&](const char* key) {
        const double v = cfg_.get_double(key, r);
        if (v < 0.0) fail(ErrorKind::Config, std::string("missing config key '") + key + "'");
        return v;
      };
      return execute(TwoTypeStrauss<Dim>(range("range11"), range("range12"), range("range22"),
                                         cfg_.get_double("hard_core", 0.0)));
    }
    fail(ErrorKind::Config, "model must be poisson, strauss2 or area");
  }

  template <ExponentialModel Model>
  ObservationDomain<Model::dim> domain(const Model& model) const {
    ObservationDomain<Model::dim> d;
    d.side = cfg_.require_double("window.side");
    d.guard = cfg_.get_double("window.guard", model.range());
    const auto c = cfg_.get_doubles("window.center");
    if (!c.empty()) {
      if (c.size() != Model::dim) fail(ErrorKind::Config, "window.center has the wrong dimension");
      std::copy(c.begin(), c.end(), d.center.begin());
    }
    if (!(d.side > 0.0)) fail(ErrorKind::Config, "window.side must be positive");
    if (d.guard < model.range()) fail(ErrorKind::Config, "window.guard is smaller than the interaction range");
    return d;
  }

  template <ExponentialModel Model>
  ParameterVector<Model::num_stats> vector_key(const std::string& key) const {
    const auto v = cfg_.get_doubles(key);
    if (v.empty()) fail(ErrorKind::Config, "missing config key '" + key + "'");
    try {
      return to_parameter<Model::num_stats>(v);
    } catch (const Error& e) {
      fail(ErrorKind::Config, key + ": " + e.what());
    }
  }

  template <ExponentialModel Model>
  GofSpec<Model::dim> gof_spec() const {
    GofSpec<Model::dim> spec;
    spec.test = parse_test_name(opt_.test.value_or(cfg_.get_string("test.name", "t1")));
    spec.hs = parse_test_functions<Model::dim>(
        opt_.h.value_or(cfg_.get_string("residual.h", spec.test == TestName::T2Tilde ? "empty:0.05" : "raw")));
    spec.subdomains = static_cast<std::size_t>(opt_.subdomains.value_or(cfg_.get_int("cov.subdomains", 4)));
    spec.delta = cfg_.get_double("cov.delta", 0.0);
    spec.d_vee = cfg_.get_double("cov.d_vee", -1.0);
    spec.alpha = opt_.alpha.value_or(cfg_.get_double("test.alpha", 0.05));
    spec.quad.resolution = static_cast<int>(cfg_.get_int("quadrature.resolution", 64));
    spec.fit.tol = cfg_.get_double("estimation.tol", 1e-9);
    spec.fit.max_iter = static_cast<int>(cfg_.get_int("estimation.max_iter", 100));
    if (cfg_.has("estimation.theta0")) {
      const auto v = vector_key<Model>("estimation.theta0");
      spec.theta0 = Eigen::VectorXd(v);
    }
    return spec;
  }

  SamplerConfig sampler() const {
    SamplerConfig s;
    s.seed = opt_.seed.value_or(static_cast<std::uint64_t>(cfg_.get_int("sampler.seed", 0)));
    s.sweeps = cfg_.get_int("sampler.sweeps", 500);
    s.birth_fraction = cfg_.get_double("sampler.birth_fraction", 0.5);
    s.moves = cfg_.get_bool("sampler.moves", false);
    return s;
  }

  std::size_t replicates() const {
    const long long n = opt_.replicates.value_or(cfg_.get_int("sampler.replicates", 1));
    if (n < 1) fail(ErrorKind::Config, "sampler.replicates must be at least 1");
    return static_cast<std::size_t>(n);
  }

  // Exact sampling for the Poisson model, the birth-death chain otherwise.
  template <ExponentialModel Model>
  Configuration<Model::dim> simulate_one(const Model& model, const ParameterVector<Model::num_stats>& theta,
                                         const ObservationDomain<Model::dim>& dom, SamplerConfig s) const {
    if constexpr (std::is_same_v<Model, PoissonModel<Model::dim>>) {
      return sample_poisson(dom.extended(), std::exp(-theta[0]), model.marks(), s.seed);
    } else {
      return sample_gibbs(model, theta, dom, s);
    }
  }

  void emit(const json& j, const std::string& path) {
    if (path.empty()) {
      out_ << j.dump(2) << '\n';
      return;
    }
    std::ofstream f(path);
    if (!f) fail(ErrorKind::Io, "cannot write '" + path + "'");
    f << j.dump(2) << '\n';
  }

  json model_json(const std::string& name) const {
    json m;
    m["name"] = name;
    for (const char* k : {"range", "range11", "range12", "range22", "hard_core", "disc_radius", "marks"}) {
      if (cfg_.has(k)) m[k] = cfg_.require_string(k);
    }
    return m;
  }

  template <ExponentialModel Model>
  ObservedPattern<Model::dim> load_pattern(const Model& model) {
    stage = "input";
    if (opt_.input.empty()) fail(ErrorKind::Config, "--input is required for '" + opt_.command + "'");
    const auto dom = domain(model);
    auto pts = io::read_points_csv<Model::dim>(opt_.input, model.marks());
    for (const auto& p : pts) {
      if (!dom.extended().contains(p.position)) {
        fail(ErrorKind::Io, "input point lies outside the observed domain (window plus guard)");
      }
    }
    return {std::move(pts), dom};
  }

  template <ExponentialModel Model>
  int execute(const Model& model) {
    const auto& c = opt_.command;
    if (c == "simulate") return simulate(model);
    if (c == "fit") return fit(model);
    if (c == "residuals") return residuals_cmd(model);
    if (c == "gof") return gof(model);
    if (c == "calibrate") return calibrate(model);
    fail(ErrorKind::Config, "unknown command '" + c + "'");
  }

  template <ExponentialModel Model>
  int simulate(const Model& model) {
    const auto dom = domain(model);
    const auto theta = vector_key<Model>("theta");
    const SamplerConfig s = sampler();
    const std::size_t n = replicates();
    stage = "simulate";
    std::vector<Configuration<Model::dim>> reps(n);
    parallel_for(n, opt_.threads, [&](std::size_t i) {
      SamplerConfig local = s;
      local.seed = s.seed + i;
      reps[i] = simulate_one(model, theta, dom, local);
    });
    stage = "output";
    const std::filesystem::path dir = opt_.output.empty() ? "." : opt_.output;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create '" + dir.string() + "'");
    json files = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      char name[48];
      std::snprintf(name, sizeof name, "replicate_%03zu.csv", i);
      io::write_points_csv((dir / name).string(), reps[i], model.marks());
      files.push_back({{"file", name}, {"seed", s.seed + i}, {"points", reps[i].size()}});
    }
    json manifest;
    manifest["model"] = model_json(model.name());
    manifest["theta"] = to_json_vector(theta);
    manifest["window"] = {{"side", dom.side}, {"guard", dom.guard}, {"dimension", Model::dim},
                          {"center", std::vector<double>(dom.center.begin(), dom.center.end())}};
    manifest["seed"] = s.seed;
    manifest["sweeps"] = s.sweeps;
    manifest["replicates"] = files;
    std::ofstream f(dir / "manifest.json");
    if (!f) fail(ErrorKind::Io, "cannot write manifest");
    f << manifest.dump(2) << '\n';
    return Ok;
  }

  template <ExponentialModel Model>
  FitResult<Model::num_stats> fit_on(const Workspace<Model>& ws, const GofSpec<Model::dim>& spec) {
    stage = "fit";
    ParameterVector<Model::num_stats> theta0 = detail::default_start(ws);
    if (spec.theta0) theta0 = *spec.theta0;
    auto res = fit_mple(ws, theta0, spec.fit);
    if (!res.converged) fail(ErrorKind::FitFailure, "MPLE did not converge: " + res.message);
    return res;
  }

  template <ExponentialModel Model>
  int fit(const Model& model) {
    const auto pattern = load_pattern(model);
    const auto spec = gof_spec<Model>();
    const Workspace<Model> ws(model, pattern, {pattern.domain.window()}, spec.quad);
    const auto res = fit_on(ws, spec);
    stage = "output";
    json j;
    j["theta_hat"] = to_json_vector(res.theta_hat);
    j["parameter_names"] = model.stat_names();
    j["gradient_norm"] = res.gradient_norm;
    j["iterations"] = res.iterations;
    j["hessian_condition"] = res.hessian_condition;
    j["converged"] = res.converged;
    j["H_hat"] = to_json(estimate_H_hat(ws, res.theta_hat));
    j["points_in_window"] = ws.num_points();
    emit(j, opt_.output);
    return Ok;
  }

  template <ExponentialModel Model>
  int residuals_cmd(const Model& model) {
    const auto pattern = load_pattern(model);
    const auto spec = gof_spec<Model>();
    stage = "grid";
    const double delta = spec.delta > 0.0 ? spec.delta : (model.range() > 0.0 ? model.range() : pattern.domain.side);
    const auto grid = partition_window(pattern.domain, delta, spec.subdomains);
    const Workspace<Model> ws(model, pattern, grid.boxes(), spec.quad, nearest_cap_for(spec.hs));
    const auto res = fit_on(ws, spec);
    stage = "residuals";
    json j;
    j["theta_hat"] = to_json_vector(res.theta_hat);
    j["cell_side"] = grid.cell_side();
    j["subdomains"] = grid.num_subdomains();
    json items = json::array();
    std::vector<Eigen::VectorXd> per_cell;
    for (const auto& h : spec.hs) {
      const auto terms = tile_terms(ws, res.theta_hat, h);
      double integral = 0.0, sum = 0.0;
      for (std::size_t t = 0; t < ws.num_tiles(); ++t) {
        integral += terms.integral[t];
        sum += terms.sum[t];
      }
      const auto sub = aggregate_subdomains<Model>(terms, grid);
      items.push_back({{"h", h.name()},
                       {"integral_term", integral},
                       {"sum_term", sum},
                       {"value", integral - sum},
                       {"subdomain_values", to_json_vector(sub.values)},
                       {"subdomain_mean", sub.mean},
                       {"clamped_energies", terms.clamped}});
      per_cell.push_back(terms.values());
    }
    j["residuals"] = items;
    stage = "output";
    if (!opt_.cells.empty()) {
      std::ofstream f(opt_.cells);
      if (!f) fail(ErrorKind::Io, "cannot write '" + opt_.cells + "'");
      f << "cell,subdomain";
      for (std::size_t k = 0; k < Model::dim; ++k) f << ",lower" << k;
      for (const auto& h : spec.hs) f << ',' << h.name();
      f << '\n';
      for (std::size_t i = 0; i < grid.size(); ++i) {
        f << i << ',' << grid[i].subdomain;
        for (std::size_t k = 0; k < Model::dim; ++k) f << ',' << io::format_double(grid[i].box.lower[k]);
        for (const auto& v : per_cell) f << ',' << io::format_double(v[static_cast<Eigen::Index>(i)]);
        f << '\n';
      }
    }
    emit(j, opt_.output);
    return Ok;
  }

  template <int P>
  static json report_json(const GofReport<P>& rep, const std::vector<std::string>& names) {
    json j;
    j["test"] = to_string(rep.test);
    j["statistic"] = rep.statistic;
    j["df"] = rep.df;
    j["p_value"] = rep.p_value;
    j["alpha"] = rep.alpha;
    j["reject"] = rep.reject;
    j["theta_hat"] = to_json_vector(rep.theta_hat);
    j["parameter_names"] = names;
    j["fit"] = {{"gradient_norm", rep.fit.gradient_norm},
                {"iterations", rep.fit.iterations},
                {"hessian_condition", rep.fit.hessian_condition}};
    json cov;
    cov["lambda_inn"] = rep.covariance.lambda_inn;
    if (rep.covariance.lambda_res) cov["lambda_res"] = *rep.covariance.lambda_res;
    if (rep.covariance.sigma2) cov["sigma2"] = to_json(*rep.covariance.sigma2);
    cov["delta_n"] = rep.covariance.delta_n;
    cov["d_vee"] = rep.covariance.d_vee;
    cov["cells_used"] = rep.covariance.cells_used;
    j["covariance"] = cov;
    j["residuals"] = to_json_vector(rep.residuals);
    j["residual_mean"] = rep.residual_mean;
    j["clamped_energies"] = rep.clamped;
    j["normalization_note"] = rep.normalization_note;
    j["warnings"] = rep.warnings;
    return j;
  }

  template <ExponentialModel Model>
  int gof(const Model& model) {
    const auto pattern = load_pattern(model);
    const auto spec = gof_spec<Model>();
    stage = "gof";
    const auto rep = run_gof(pattern, model, spec);
    stage = "output";
    emit(report_json(rep, model.stat_names()), opt_.output);
    return Ok;
  }

  template <ExponentialModel Model>
  int calibrate(const Model& model) {
    const auto dom = domain(model);
    const auto theta = vector_key<Model>("theta");
    const auto spec = gof_spec<Model>();
    const SamplerConfig s = sampler();
    const std::size_t n = replicates();
    stage = "calibrate";
    const auto cal = calibrate_null(
        model, dom, spec, n, s.seed,
        [&](std::uint64_t seed) {
          SamplerConfig local = s;
          local.seed = seed;
          return simulate_one(model, theta, dom, local);
        },
        opt_.threads);
    stage = "output";
    json j;
    j["test"] = to_string(spec.test);
    j["replicates"] = cal.replicates;
    j["df"] = cal.df;
    j["ks_statistic"] = cal.ks.statistic;
    j["ks_p_value"] = cal.ks.p_value;
    j["rejection_rate"] = cal.rejection_rate;
    j["degenerate"] = cal.degenerate;
    j["fit_failures"] = cal.fit_failures;
    j["degenerate_fraction"] = cal.degenerate_fraction;
    j["statistics"] = cal.statistics;
    if (!opt_.stats.empty()) {
      std::ofstream f(opt_.stats);
      if (!f) fail(ErrorKind::Io, "cannot write '" + opt_.stats + "'");
      f << "replicate,p_value\n";
      for (std::size_t i = 0; i < cal.p_values.size(); ++i) f << i << ',' << io::format_double(cal.p_values[i]) << '\n';
    }
    emit(j, opt_.output);
    if (!cal.failure.empty()) {
      stage = "calibrate";
      fail(ErrorKind::CalibrationFailure, cal.failure);
    }
    return Ok;
  }

  Options opt_;
  io::KeyValueConfig cfg_;
  std::ostream& out_;
};

inline std::string stage_for(ErrorKind kind, const std::string& stage) {
  if (stage != "gof" && stage != "calibrate") return stage;
  switch (kind) {
    case ErrorKind::FitFailure: return "fit";
    case ErrorKind::DegenerateNormalization: return "covariance";
    default: return stage;
  }
}

inline int report_error(std::ostream& err, const std::string& stage, const std::string& kind,
                        const std::string& message, int code) {
  json j;
  j["error"] = {{"stage", stage}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  err << j.dump() << '\n';
  return code;
}

/// Entry point shared by the `gibbsgof` binary and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Residual diagnostics and goodness-of-fit tests for marked Gibbs point processes"};
  app.require_subcommand(1);
  // `--h` selects test functions, so help is long-form only.
  app.set_help_flag("--help", "print this help message and exit");
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opt.config, "run configuration (key = value)")->required();
    sub->add_option("-o,--output", opt.output, "output file (directory for simulate); stdout when omitted");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_option("--seed", opt.seed, "override sampler.seed");
  };
  auto* simulate = app.add_subcommand("simulate", "simulate replicates from the configured model");
  add_common(simulate);
  simulate->add_option("--replicates", opt.replicates, "override sampler.replicates");
  auto* fit = app.add_subcommand("fit", "maximum pseudolikelihood fit");
  add_common(fit);
  fit->add_option("-i,--input", opt.input, "point pattern CSV")->required();
  auto* res = app.add_subcommand("residuals", "residuals on the window, subdomains and cells");
  add_common(res);
  res->add_option("-i,--input", opt.input, "point pattern CSV")->required();
  res->add_option("--cells", opt.cells, "CSV of per-cell residuals");
  res->add_option("--h", opt.h, "raw|inverse|pearson|empty:r1,r2,...");
  res->add_option("--subdomains", opt.subdomains, "number of subdomains");
  auto* gof = app.add_subcommand("gof", "goodness-of-fit test");
  add_common(gof);
  gof->add_option("-i,--input", opt.input, "point pattern CSV")->required();
  auto* cal = app.add_subcommand("calibrate", "Monte-Carlo null calibration of a test");
  add_common(cal);
  cal->add_option("--replicates", opt.replicates, "override sampler.replicates");
  cal->add_option("--stats", opt.stats, "CSV of per-replicate p-values");
  for (auto* sub : {gof, cal}) {
    sub->add_option("--test", opt.test, "t1|t1tilde|t2tilde");
    sub->add_option("--h", opt.h, "raw|inverse|pearson|empty:r1,r2,...");
    sub->add_option("--subdomains", opt.subdomains, "number of subdomains");
    sub->add_option("--alpha", opt.alpha, "test level");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return Ok;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "arguments", "config", e.what(), ConfigError);
  }
  opt.command = app.get_subcommands().front()->get_name();

  std::string stage = "config";
  try {
    auto cfg = io::KeyValueConfig::load(opt.config);
    cfg.validate(config_schema());
    Runner runner(opt, std::move(cfg), out);
    try {
      return runner.run();
    } catch (...) {
      stage = runner.stage;
      throw;
    }
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    return report_error(err, stage_for(e.kind(), stage), std::string(to_string(e.kind())), e.what(), code);
  } catch (const std::exception& e) {
    return report_error(err, stage, "internal", e.what(), IoError);
  }
}

}  // namespace gibbsgof::cli
