#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gibbsgof/covariance.hpp"
#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"
#include "gibbsgof/mple.hpp"
#include "gibbsgof/residuals.hpp"
#include "gibbsgof/sampler.hpp"
#include "gibbsgof/stats.hpp"
#include "gibbsgof/workspace.hpp"

namespace gibbsgof {

enum class TestName { T1, T1Tilde, T2Tilde };

inline std::string to_string(TestName t) {
  switch (t) {
    case TestName::T1: return "t1";
    case TestName::T1Tilde: return "t1tilde";
    case TestName::T2Tilde: return "t2tilde";
  }
  return "unknown";
}

template <std::size_t Dim>
struct GofSpec {
  TestName test = TestName::T1;
  std::vector<TestFunction<Dim>> hs{TestFunction<Dim>::raw()};
  std::size_t subdomains = 4;
  double delta = 0.0;   // 0 selects the model range
  double d_vee = -1.0;  // negative selects the model range
  double alpha = 0.05;
  QuadratureSpec quad;
  FitOptions fit;
  std::optional<Eigen::VectorXd> theta0;
};

inline constexpr const char* kNormalizationNote =
    "all statistics are scaled by the inverse volume (subdomain volume for t1 and t1tilde, "
    "window volume for t2tilde), the scaling under which the residual vector has a chi-squared limit";

template <int P>
struct GofReport {
  TestName test = TestName::T1;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
  ParameterVector<P> theta_hat;
  FitResult<P> fit;
  CovarianceEstimate covariance;
  Eigen::VectorXd residuals;           // per subdomain (t1, t1tilde) or per test function (t2tilde)
  Eigen::VectorXd cell_residuals;      // per grid cell, first test function
  double residual_mean = 0.0;
  long long clamped = 0;
  std::string normalization_note = kNormalizationNote;
  std::vector<std::string> warnings;
};

namespace detail {

template <ExponentialModel Model>
bool is_linear_in_stats(const Model& model, const TestFunction<Model::dim>& h) {
  if (h.kind == TestKind::LinearStat) return true;
  return h.kind == TestKind::Raw && model.unit_combination().has_value();
}

template <ExponentialModel Model>
ParameterVector<Model::num_stats> default_start(const Workspace<Model>& ws) {
  using Vector = ParameterVector<Model::num_stats>;
  const Model& model = ws.model();
  Vector theta = Vector::Zero();
  if (auto unit = model.unit_combination()) {
    std::size_t n = 0;
    for (char r : ws.point_removable()) n += r ? 1 : 0;
    const double rate = std::max<double>(static_cast<double>(n), 1.0) / ws.volume();
    theta = -std::log(rate) * (*unit) / unit->squaredNorm();
  }
  return model.project(theta);
}

}  // namespace detail

/// Full pipeline: grid, MPLE, residuals, covariance estimates, statistic.
template <ExponentialModel Model>
GofReport<Model::num_stats> run_gof(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                    const GofSpec<Model::dim>& spec) {
  constexpr int P = Model::num_stats;
  GofReport<P> rep;
  rep.test = spec.test;
  rep.alpha = spec.alpha;
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) fail(ErrorKind::InvalidParameter, "alpha must lie in (0, 1)");
  if (spec.hs.empty()) fail(ErrorKind::InvalidParameter, "at least one test function is required");

  const bool tilde = spec.test != TestName::T1;
  const std::size_t J = spec.test == TestName::T2Tilde ? 1 : spec.subdomains;
  if (spec.test != TestName::T2Tilde) {
    if (spec.hs.size() != 1) fail(ErrorKind::InvalidParameter, "t1 and t1tilde take exactly one test function");
    if (J < 2) fail(ErrorKind::InvalidParameter, "t1 and t1tilde need at least two subdomains");
  }
  if (tilde) {
    for (const auto& h : spec.hs) {
      if (detail::is_linear_in_stats(model, h)) {
        fail(ErrorKind::DegenerateNormalization,
             "test function '" + h.name() +
                 "' is a linear combination of the sufficient statistics, so lambda_Res = 0 and the "
                 "normalization does not exist");
      }
    }
  }
  for (const auto& h : spec.hs) {
    if (h.kind == TestKind::EmptySpace && h.radius > model.range()) {
      rep.warnings.push_back("empty-space radius " + std::to_string(h.radius) +
                             " exceeds the interaction range; the test function is not local at that range");
    }
  }

  const double delta = spec.delta > 0.0 ? spec.delta : model.range();
  if (!(delta > 0.0)) fail(ErrorKind::InvalidParameter, "cell side delta must be given for a model of range 0");
  const double d_vee = spec.d_vee >= 0.0 ? spec.d_vee : model.range();
  if (d_vee < model.range()) fail(ErrorKind::InvalidParameter, "D_vee must be at least the interaction range");

  const CellGrid<Model::dim> grid = partition_window(pattern.domain, delta, J);
  const Workspace<Model> ws(model, pattern, grid.boxes(), spec.quad, nearest_cap_for(spec.hs));

  const ParameterVector<P> theta0 =
      spec.theta0 ? to_parameter<P>(std::span<const double>(spec.theta0->data(), static_cast<std::size_t>(spec.theta0->size())))
                  : detail::default_start(ws);
  rep.fit = fit_mple(ws, theta0, spec.fit);
  if (!rep.fit.converged) fail(ErrorKind::FitFailure, "MPLE did not converge: " + rep.fit.message);
  const ParameterVector<P> theta = rep.fit.theta_hat;
  rep.theta_hat = theta;

  rep.covariance.delta_n = grid.cell_side();
  rep.covariance.d_vee = d_vee;
  rep.covariance.cells_used = grid.size();
  rep.covariance.reach = neighbourhood_reach(d_vee, grid.cell_side());

  const auto grad = lpl_gradient_tiles(ws, theta);
  Eigen::Matrix<double, P, P> H_hat;
  if (tilde) H_hat = estimate_H_hat(ws, theta);

  auto r_infinity = [&](const TileTerms& terms, const TestFunction<Model::dim>& h) {
    const ParameterVector<P> W = estimate_W_hat<P>(H_hat, estimate_E_hat(ws, theta, h), spec.fit.max_condition);
    return r_infinity_tiles<Model>(terms, grad, W);
  };

  if (spec.test != TestName::T2Tilde) {
    const auto& h = spec.hs.front();
    const TileTerms terms = tile_terms(ws, theta, h);
    rep.clamped = terms.clamped;
    rep.cell_residuals = terms.values();
    const SubdomainResiduals sub = aggregate_subdomains<Model>(terms, grid);
    rep.residuals = sub.values;
    rep.residual_mean = sub.mean;
    const double sub_volume = grid.subdomain_box(0).volume();

    const double lambda_inn = neighbourhood_sum(grid, rep.cell_residuals, rep.covariance.reach);
    rep.covariance.lambda_inn = lambda_inn;
    if (!(lambda_inn > 0.0)) {
      fail(ErrorKind::DegenerateNormalization,
           "lambda_Inn estimate " + std::to_string(lambda_inn) + " is not positive");
    }
    if (spec.test == TestName::T1) {
      const Eigen::VectorXd centred = sub.values.array() - sub.mean;
      rep.statistic = centred.squaredNorm() / (sub_volume * lambda_inn);
      rep.df = static_cast<int>(J) - 1;
    } else {
      const double lambda_res = neighbourhood_sum(grid, r_infinity(terms, h), rep.covariance.reach);
      rep.covariance.lambda_res = lambda_res;
      if (!(lambda_res > 1e-10 * lambda_inn)) {
        fail(ErrorKind::DegenerateNormalization,
             "lambda_Res estimate " + std::to_string(lambda_res) + " is not positive");
      }
      const double a = 1.0 / std::sqrt(lambda_inn);
      const double b = 1.0 / std::sqrt(lambda_res);
      const Eigen::VectorXd normalized = a * sub.values.array() + (b - a) * sub.mean;
      rep.statistic = normalized.squaredNorm() / sub_volume;
      rep.df = static_cast<int>(J);
    }
  } else {
    const auto s = static_cast<Eigen::Index>(spec.hs.size());
    Eigen::MatrixXd r_inf(s, static_cast<Eigen::Index>(grid.size()));
    rep.residuals.resize(s);
    for (Eigen::Index k = 0; k < s; ++k) {
      const auto& h = spec.hs[static_cast<std::size_t>(k)];
      const TileTerms terms = tile_terms(ws, theta, h);
      rep.clamped += terms.clamped;
      const Eigen::VectorXd cells = terms.values();
      if (k == 0) rep.cell_residuals = cells;
      rep.residuals[k] = cells.sum();
      r_inf.row(k) = r_infinity(terms, h).transpose();
      if (k == 0) rep.covariance.lambda_inn = neighbourhood_sum(grid, cells, rep.covariance.reach);
    }
    rep.residual_mean = rep.residuals.mean();
    const Eigen::MatrixXd sigma2 = neighbourhood_outer_sum(grid, r_inf, rep.covariance.reach);
    rep.covariance.sigma2 = sigma2;
    const Eigen::MatrixXd B = matrix_inv_sqrt(sigma2);
    rep.statistic = (B * rep.residuals).squaredNorm() / grid.window().volume();
    rep.df = static_cast<int>(s);
  }

  rep.p_value = chi2_sf(rep.statistic, rep.df);
  rep.reject = rep.statistic > chi2_quantile(1.0 - spec.alpha, rep.df);
  return rep;
}

template <ExponentialModel Model>
GofReport<Model::num_stats> test_T1(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                    const TestFunction<Model::dim>& h, std::size_t J,
                                    GofSpec<Model::dim> spec = {}) {
  spec.test = TestName::T1;
  spec.hs = {h};
  spec.subdomains = J;
  return run_gof(pattern, model, spec);
}

template <ExponentialModel Model>
GofReport<Model::num_stats> test_T1_tilde(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                          const TestFunction<Model::dim>& h, std::size_t J,
                                          GofSpec<Model::dim> spec = {}) {
  spec.test = TestName::T1Tilde;
  spec.hs = {h};
  spec.subdomains = J;
  return run_gof(pattern, model, spec);
}

template <ExponentialModel Model>
GofReport<Model::num_stats> test_T2_tilde(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                          const std::vector<TestFunction<Model::dim>>& hs,
                                          GofSpec<Model::dim> spec = {}) {
  spec.test = TestName::T2Tilde;
  spec.hs = hs;
  return run_gof(pattern, model, spec);
}

struct CalibrationResult {
  std::vector<double> statistics;  // sorted, non-degenerate replicates only
  std::vector<double> p_values;    // in replicate order
  int df = 0;
  KsResult ks;
  std::size_t replicates = 0;
  std::size_t degenerate = 0;    // refused normalizations
  std::size_t fit_failures = 0;  // MPLE failures
  double degenerate_fraction = 0.0;
  double rejection_rate = 0.0;   // among non-degenerate replicates
  std::string failure;           // set when more than 20% of replicates are unusable
};

/// Simulate, refit and test `n` replicates; seeds are seed + i.
template <ExponentialModel Model, class Simulator>
CalibrationResult calibrate_null(const Model& model, const ObservationDomain<Model::dim>& domain,
                                 const GofSpec<Model::dim>& spec, std::size_t n, std::uint64_t seed,
                                 Simulator&& simulate, unsigned threads = 0) {
  if (n == 0) fail(ErrorKind::InvalidParameter, "need at least one replicate");
  enum class Outcome { Ok, Degenerate, FitFailed };
  std::vector<Outcome> outcome(n, Outcome::Ok);
  std::vector<double> stat(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> pval(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> rejected(n, 0);
  std::vector<int> dfs(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const ObservedPattern<Model::dim> pattern{simulate(seed + i), domain};
    try {
      const auto rep = run_gof(pattern, model, spec);
      stat[i] = rep.statistic;
      pval[i] = rep.p_value;
      rejected[i] = rep.reject ? 1 : 0;
      dfs[i] = rep.df;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DegenerateNormalization) {
        outcome[i] = Outcome::Degenerate;
      } else if (e.kind() == ErrorKind::FitFailure) {
        outcome[i] = Outcome::FitFailed;
      } else {
        throw;
      }
    }
  });

  CalibrationResult out;
  out.replicates = n;
  out.p_values = pval;
  std::size_t rejections = 0;
  for (std::size_t i = 0; i < n; ++i) {
    switch (outcome[i]) {
      case Outcome::Ok:
        out.statistics.push_back(stat[i]);
        out.df = dfs[i];
        rejections += static_cast<std::size_t>(rejected[i]);
        break;
      case Outcome::Degenerate: ++out.degenerate; break;
      case Outcome::FitFailed: ++out.fit_failures; break;
    }
  }
  std::sort(out.statistics.begin(), out.statistics.end());
  out.degenerate_fraction = static_cast<double>(out.degenerate + out.fit_failures) / static_cast<double>(n);
  if (!out.statistics.empty()) {
    out.ks = ks_test_chi2(out.statistics, out.df);
    out.rejection_rate = static_cast<double>(rejections) / static_cast<double>(out.statistics.size());
  } else {
    out.ks.p_value = std::numeric_limits<double>::quiet_NaN();
    out.ks.statistic = std::numeric_limits<double>::quiet_NaN();
  }
  if (out.degenerate_fraction > 0.2) {
    out.failure = std::to_string(out.degenerate) + " degenerate and " + std::to_string(out.fit_failures) +
                  " failed fits out of " + std::to_string(n) + " replicates";
  }
  return out;
}

/// Calibration against the Gibbs sampler at θ*.
template <ExponentialModel Model>
CalibrationResult calibrate_null(const Model& model, const ParameterVector<Model::num_stats>& theta_star,
                                 const ObservationDomain<Model::dim>& domain, const GofSpec<Model::dim>& spec,
                                 std::size_t n, const SamplerConfig& sampler, unsigned threads = 0) {
  return calibrate_null(
      model, domain, spec, n, sampler.seed,
      [&](std::uint64_t s) {
        SamplerConfig cfg = sampler;
        cfg.seed = s;
        return sample_gibbs(model, theta_star, domain, cfg);
      },
      threads);
}

}  // namespace gibbsgof
