#pragma once

#include <Eigen/Core>
#include <vector>

#include "gibbsgof/geometry.hpp"
#include "gibbsgof/models.hpp"
#include "gibbsgof/quadrature.hpp"
#include "gibbsgof/test_function.hpp"
#include "gibbsgof/workspace.hpp"

namespace gibbsgof {

template <std::size_t Dim>
struct ResidualValue {
  double integral_term = 0.0;
  double sum_term = 0.0;
  double value = 0.0;
  Box<Dim> region;
  Eigen::VectorXd theta_used;
  long long clamped = 0;
};

/// Integral and sum terms of h-residuals on each tile of a workspace.
struct TileTerms {
  std::vector<double> integral;
  std::vector<double> sum;
  long long clamped = 0;

  double value(std::size_t t) const { return integral[t] - sum[t]; }
  Eigen::VectorXd values() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(integral.size()));
    for (std::size_t t = 0; t < integral.size(); ++t) v[static_cast<Eigen::Index>(t)] = value(t);
    return v;
  }
};

/// The sum runs over removable data points only (all points for hereditary models).
template <ExponentialModel Model>
TileTerms tile_terms(const Workspace<Model>& ws, const ParameterVector<Model::num_stats>& theta,
                     const TestFunction<Model::dim>& h) {
  if (h.kind == TestKind::EmptySpace && h.radius > ws.nearest_cap()) {
    fail(ErrorKind::InvalidParameter, "workspace nearest-distance cap is below the empty-space radius");
  }
  if (h.kind == TestKind::Custom && !h.custom) fail(ErrorKind::InvalidParameter, "custom test function is empty");
  const Eigen::VectorXd theta_x = theta;
  const auto& phi = ws.pattern().points;
  TileTerms out;
  out.integral.assign(ws.num_tiles(), 0.0);
  out.sum.assign(ws.num_tiles(), 0.0);
  EnergyClamp clamp;

  for (std::size_t t = 0; t < ws.num_tiles(); ++t) {
    double acc = 0.0;
    for (std::size_t n = ws.node_begin(t); n < ws.node_begin(t + 1); ++n) {
      const auto v = ws.node_stats().col(static_cast<Eigen::Index>(n));
      const double g = weighted_integrand(h, ws.node_energy(n, theta), ws.node_forbidden()[n] != 0, v,
                                          ws.node_nearest()[n], clamp,
                                          [&] { return h.custom(ws.nodes()[n], phi, theta_x); });
      if (!std::isfinite(g)) detail::non_finite_node<Model::dim>(ws.nodes()[n], g);
      acc += ws.node_weight()[n] * g;
    }
    out.integral[t] = acc;
  }
  for (std::size_t k = 0; k < ws.num_points(); ++k) {
    if (!ws.point_removable()[k]) continue;
    const auto v = ws.point_stats().col(static_cast<Eigen::Index>(k));
    const std::size_t idx = ws.point_index()[k];
    out.sum[ws.point_tile()[k]] += point_value(h, ws.point_energy(k, theta), v, ws.point_nearest()[k], clamp,
                                               [&] { return h.custom(phi[idx], phi.without(idx), theta_x); });
  }
  out.clamped = clamp.count;
  return out;
}

namespace detail {

template <ExponentialModel Model>
ResidualValue<Model::dim> single_region(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                        const ParameterVector<Model::num_stats>& theta,
                                        const TestFunction<Model::dim>& h, const Box<Model::dim>& region,
                                        const QuadratureSpec& quad) {
  const double cap = h.kind == TestKind::EmptySpace ? h.radius : 0.0;
  const Workspace<Model> ws(model, pattern, {region}, quad, cap);
  const auto terms = tile_terms(ws, theta, h);
  ResidualValue<Model::dim> r;
  r.integral_term = terms.integral[0];
  r.sum_term = terms.sum[0];
  r.value = r.integral_term - r.sum_term;
  r.region = region;
  r.theta_used = theta;
  r.clamped = terms.clamped;
  return r;
}

}  // namespace detail

/// h-innovations on `region` at the true parameter.
template <ExponentialModel Model>
ResidualValue<Model::dim> innovations(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                      const ParameterVector<Model::num_stats>& theta,
                                      const TestFunction<Model::dim>& h, const Box<Model::dim>& region,
                                      const QuadratureSpec& quad = {}) {
  return detail::single_region(pattern, model, theta, h, region, quad);
}

/// h-residuals on `region` at an estimate θ̂.
template <ExponentialModel Model>
ResidualValue<Model::dim> residuals(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                    const ParameterVector<Model::num_stats>& theta_hat,
                                    const TestFunction<Model::dim>& h, const Box<Model::dim>& region,
                                    const QuadratureSpec& quad = {}) {
  if (!model.admissible(theta_hat)) fail(ErrorKind::InvalidParameter, "estimate is not admissible");
  return detail::single_region(pattern, model, theta_hat, h, region, quad);
}

struct SubdomainResiduals {
  Eigen::VectorXd values;  // one entry per subdomain
  double mean = 0.0;
  long long clamped = 0;
};

/// Sums per-cell residuals of a workspace built on `grid` into subdomains.
template <ExponentialModel Model>
SubdomainResiduals aggregate_subdomains(const TileTerms& terms, const CellGrid<Model::dim>& grid) {
  SubdomainResiduals out;
  out.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.num_subdomains()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.values[static_cast<Eigen::Index>(grid[i].subdomain)] += terms.value(i);
  }
  out.mean = out.values.mean();
  out.clamped = terms.clamped;
  return out;
}

template <ExponentialModel Model>
SubdomainResiduals residual_vector_subdomains(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                              const ParameterVector<Model::num_stats>& theta_hat,
                                              const TestFunction<Model::dim>& h,
                                              const CellGrid<Model::dim>& grid, const QuadratureSpec& quad = {}) {
  const double cap = h.kind == TestKind::EmptySpace ? h.radius : 0.0;
  const Workspace<Model> ws(model, pattern, grid.boxes(), quad, cap);
  return aggregate_subdomains<Model>(tile_terms(ws, theta_hat, h), grid);
}

/// Full-workspace residual for each test function.
template <ExponentialModel Model>
Eigen::VectorXd residual_vector_functions(const Workspace<Model>& ws,
                                          const ParameterVector<Model::num_stats>& theta_hat,
                                          const std::vector<TestFunction<Model::dim>>& hs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(hs.size()));
  for (std::size_t s = 0; s < hs.size(); ++s) out[static_cast<Eigen::Index>(s)] = tile_terms(ws, theta_hat, hs[s]).values().sum();
  return out;
}

template <ExponentialModel Model>
Eigen::VectorXd residual_vector_functions(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                          const ParameterVector<Model::num_stats>& theta_hat,
                                          const std::vector<TestFunction<Model::dim>>& hs,
                                          const Box<Model::dim>& region, const QuadratureSpec& quad = {}) {
  const Workspace<Model> ws(model, pattern, {region}, quad, nearest_cap_for(hs));
  return residual_vector_functions(ws, theta_hat, hs);
}

}  // namespace gibbsgof
