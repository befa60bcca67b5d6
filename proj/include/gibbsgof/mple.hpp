#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/models.hpp"
#include "gibbsgof/quadrature.hpp"
#include "gibbsgof/test_function.hpp"
#include "gibbsgof/workspace.hpp"

namespace gibbsgof {

template <int P>
struct FitResult {
  ParameterVector<P> theta_hat;
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  double hessian_condition = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::string message;
};

struct FitOptions {
  double tol = 1e-9;
  int max_iter = 100;
  double max_condition = 1e12;
};

/// Sum of v(x | φ \ x) over the removable data points of a workspace.
template <ExponentialModel Model>
StatVector<Model::num_stats> observed_stat_sum(const Workspace<Model>& ws) {
  StatVector<Model::num_stats> s = StatVector<Model::num_stats>::Zero();
  for (std::size_t k = 0; k < ws.num_points(); ++k) {
    if (ws.point_removable()[k]) s += ws.point_stats().col(static_cast<Eigen::Index>(k));
  }
  return s;
}

template <ExponentialModel Model>
double log_pseudolikelihood(const Workspace<Model>& ws, const ParameterVector<Model::num_stats>& theta) {
  double integral = 0.0;
  for (std::size_t n = 0; n < ws.num_nodes(); ++n) {
    if (ws.node_forbidden()[n]) continue;
    integral += ws.node_weight()[n] * std::exp(-ws.node_energy(n, theta));
  }
  return -integral - theta.dot(observed_stat_sum(ws));
}

/// Gradient of the log-pseudolikelihood restricted to each tile (one column per tile).
template <ExponentialModel Model>
Eigen::Matrix<double, Model::num_stats, Eigen::Dynamic> lpl_gradient_tiles(
    const Workspace<Model>& ws, const ParameterVector<Model::num_stats>& theta) {
  Eigen::Matrix<double, Model::num_stats, Eigen::Dynamic> g(Model::num_stats,
                                                           static_cast<Eigen::Index>(ws.num_tiles()));
  g.setZero();
  for (std::size_t t = 0; t < ws.num_tiles(); ++t) {
    for (std::size_t n = ws.node_begin(t); n < ws.node_begin(t + 1); ++n) {
      if (ws.node_forbidden()[n]) continue;
      g.col(static_cast<Eigen::Index>(t)) += ws.node_weight()[n] * std::exp(-ws.node_energy(n, theta)) *
                                             ws.node_stats().col(static_cast<Eigen::Index>(n));
    }
  }
  for (std::size_t k = 0; k < ws.num_points(); ++k) {
    if (!ws.point_removable()[k]) continue;
    g.col(static_cast<Eigen::Index>(ws.point_tile()[k])) -= ws.point_stats().col(static_cast<Eigen::Index>(k));
  }
  return g;
}

template <ExponentialModel Model>
StatVector<Model::num_stats> lpl_gradient(const Workspace<Model>& ws,
                                          const ParameterVector<Model::num_stats>& theta) {
  return lpl_gradient_tiles(ws, theta).rowwise().sum();
}

template <ExponentialModel Model>
Eigen::Matrix<double, Model::num_stats, Model::num_stats> lpl_hessian(
    const Workspace<Model>& ws, const ParameterVector<Model::num_stats>& theta) {
  constexpr int P = Model::num_stats;
  Eigen::Matrix<double, P, P> h = Eigen::Matrix<double, P, P>::Zero();
  for (std::size_t n = 0; n < ws.num_nodes(); ++n) {
    if (ws.node_forbidden()[n]) continue;
    const auto v = ws.node_stats().col(static_cast<Eigen::Index>(n));
    h.noalias() -= ws.node_weight()[n] * std::exp(-ws.node_energy(n, theta)) * (v * v.transpose());
  }
  return h;
}

/// Ĥ = |Λ|⁻¹ ∫ v vᵀ e^{-θᵀv}.
template <ExponentialModel Model>
Eigen::Matrix<double, Model::num_stats, Model::num_stats> estimate_H_hat(
    const Workspace<Model>& ws, const ParameterVector<Model::num_stats>& theta) {
  return -lpl_hessian(ws, theta) / ws.volume();
}

/// Ê = |Λ|⁻¹ ∫ h v e^{-θᵀv}, on the same nodes as the residual integral.
template <ExponentialModel Model>
StatVector<Model::num_stats> estimate_E_hat(const Workspace<Model>& ws,
                                            const ParameterVector<Model::num_stats>& theta,
                                            const TestFunction<Model::dim>& h) {
  const Eigen::VectorXd theta_x = theta;
  const auto& phi = ws.pattern().points;
  EnergyClamp clamp;
  StatVector<Model::num_stats> e = StatVector<Model::num_stats>::Zero();
  for (std::size_t n = 0; n < ws.num_nodes(); ++n) {
    const auto v = ws.node_stats().col(static_cast<Eigen::Index>(n));
    const double g = weighted_integrand(h, ws.node_energy(n, theta), ws.node_forbidden()[n] != 0, v,
                                        ws.node_nearest()[n], clamp,
                                        [&] { return h.custom(ws.nodes()[n], phi, theta_x); });
    e += ws.node_weight()[n] * g * v;
  }
  return e / ws.volume();
}

/// Eigenvalue-based condition number of a symmetric matrix (∞ when singular).
template <class Matrix>
double symmetric_condition(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(a), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double hi = ev.cwiseAbs().maxCoeff();
  const double lo = ev.cwiseAbs().minCoeff();
  if (lo == 0.0 || !std::isfinite(hi)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Ŵ = Ĥ⁻¹ Ê.
template <int P>
ParameterVector<P> estimate_W_hat(const Eigen::Matrix<double, P, P>& H_hat, const StatVector<P>& E_hat,
                                  double max_condition = 1e12) {
  const double cond = symmetric_condition(H_hat);
  if (!(cond <= max_condition)) {
    std::ostringstream os;
    os << "H_hat is singular (condition number " << cond << ")";
    fail(ErrorKind::DegenerateNormalization, os.str());
  }
  return H_hat.ldlt().solve(E_hat);
}

/// Maximum pseudolikelihood by Newton ascent with step halving and projection
/// onto the admissible box. Components held at a bound (with the gradient
/// pushing outward) are frozen for the Newton step.
template <ExponentialModel Model>
FitResult<Model::num_stats> fit_mple(const Workspace<Model>& ws, ParameterVector<Model::num_stats> theta0,
                                     const FitOptions& opt = {}) {
  constexpr int P = Model::num_stats;
  using Vector = ParameterVector<P>;
  const Model& model = ws.model();
  if (!model.admissible(theta0)) fail(ErrorKind::InvalidParameter, "starting parameter is not admissible");

  FitResult<P> res;
  res.theta_hat = theta0;

  // No finite maximizer when a sign-definite statistic is never observed, or
  // observed although the model cannot produce it anywhere in the window.
  const StatVector<P> observed = observed_stat_sum(ws);
  for (int k = 0; k < P; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t n = 0; n < ws.num_nodes(); ++n) {
      if (ws.node_forbidden()[n]) continue;
      lo = std::min(lo, ws.node_stats()(k, static_cast<Eigen::Index>(n)));
      hi = std::max(hi, ws.node_stats()(k, static_cast<Eigen::Index>(n)));
    }
    const bool pos = lo >= 0.0 && hi > 0.0;
    if (pos && observed[k] == 0.0) {
      res.message = "no finite maximizer: statistic '" + model.stat_names()[static_cast<std::size_t>(k)] +
                    "' is never observed, so the pseudolikelihood increases without bound";
      return res;
    }
    if (!(hi > 0.0) && lo >= 0.0 && observed[k] > 0.0) {
      res.message = "no finite maximizer: statistic '" + model.stat_names()[static_cast<std::size_t>(k)] +
                    "' vanishes at every quadrature node";
      return res;
    }
  }

  const Vector lower = model.lower_bounds();
  auto free_mask = [&](const Vector& theta, const Vector& g) {
    Eigen::Matrix<bool, P, 1> free;
    for (int k = 0; k < P; ++k) free[k] = !(theta[k] <= lower[k] && g[k] < 0.0);
    return free;
  };
  auto projected_norm = [&](const Vector& theta, const Vector& g) {
    const auto free = free_mask(theta, g);
    double m = 0.0;
    for (int k = 0; k < P; ++k) {
      if (free[k]) m = std::max(m, std::abs(g[k]));
    }
    return m;
  };

  Vector theta = model.project(theta0);
  double value = log_pseudolikelihood(ws, theta);
  Vector g = lpl_gradient(ws, theta);
  res.gradient_norm = projected_norm(theta, g);

  for (int it = 0; it < opt.max_iter; ++it) {
    if (res.gradient_norm <= opt.tol) {
      res.converged = true;
      break;
    }
    const auto free = free_mask(theta, g);
    std::vector<int> idx;
    for (int k = 0; k < P; ++k) {
      if (free[k]) idx.push_back(k);
    }
    const Eigen::Matrix<double, P, P> hess = lpl_hessian(ws, theta);
    const auto f = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd neg(f, f);
    Eigen::VectorXd gf(f);
    for (Eigen::Index a = 0; a < f; ++a) {
      gf[a] = g[idx[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < f; ++b) neg(a, b) = -hess(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    res.hessian_condition = symmetric_condition(neg);
    if (!(res.hessian_condition <= opt.max_condition)) {
      std::ostringstream os;
      os << "pseudolikelihood Hessian is singular (condition number " << res.hessian_condition << ")";
      fail(ErrorKind::FitFailure, os.str());
    }
    const Eigen::VectorXd step_f = neg.ldlt().solve(gf);
    Vector step = Vector::Zero();
    for (Eigen::Index a = 0; a < f; ++a) step[idx[static_cast<std::size_t>(a)]] = step_f[a];

    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, scale *= 0.5) {
      const Vector trial = model.project(theta + scale * step);
      const double tv = log_pseudolikelihood(ws, trial);
      if (std::isfinite(tv) && tv >= value - 1e-12 * std::abs(value)) {
        theta = trial;
        value = tv;
        accepted = true;
        break;
      }
    }
    res.iterations = it + 1;
    g = lpl_gradient(ws, theta);
    res.gradient_norm = projected_norm(theta, g);
    if (!accepted) {
      res.converged = res.gradient_norm <= opt.tol;
      if (!res.converged) res.message = "line search failed to increase the pseudolikelihood";
      break;
    }
  }
  if (!res.converged && res.gradient_norm <= opt.tol) res.converged = true;
  if (!res.converged && res.message.empty()) res.message = "maximum number of Newton iterations reached";
  res.theta_hat = theta;
  if (res.converged) {
    res.hessian_condition = symmetric_condition(-lpl_hessian(ws, theta));
    res.message.clear();
  }
  return res;
}

// Convenience overloads on a single window.

template <ExponentialModel Model>
double log_pseudolikelihood(const ObservedPattern<Model::dim>& pattern, const Model& model,
                            const ParameterVector<Model::num_stats>& theta, const Box<Model::dim>& window,
                            const QuadratureSpec& quad = {}) {
  return log_pseudolikelihood(Workspace<Model>(model, pattern, {window}, quad), theta);
}

template <ExponentialModel Model>
StatVector<Model::num_stats> lpl_gradient(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                          const ParameterVector<Model::num_stats>& theta,
                                          const Box<Model::dim>& window, const QuadratureSpec& quad = {}) {
  return lpl_gradient(Workspace<Model>(model, pattern, {window}, quad), theta);
}

template <ExponentialModel Model>
Eigen::Matrix<double, Model::num_stats, Model::num_stats> lpl_hessian(
    const ObservedPattern<Model::dim>& pattern, const Model& model, const ParameterVector<Model::num_stats>& theta,
    const Box<Model::dim>& window, const QuadratureSpec& quad = {}) {
  return lpl_hessian(Workspace<Model>(model, pattern, {window}, quad), theta);
}

template <ExponentialModel Model>
FitResult<Model::num_stats> fit_mple(const ObservedPattern<Model::dim>& pattern, const Model& model,
                                     const ParameterVector<Model::num_stats>& theta0,
                                     const Box<Model::dim>& window, const QuadratureSpec& quad = {},
                                     const FitOptions& opt = {}) {
  return fit_mple(Workspace<Model>(model, pattern, {window}, quad), theta0, opt);
}

}  // namespace gibbsgof
