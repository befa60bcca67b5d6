#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"
#include "gibbsgof/mple.hpp"
#include "gibbsgof/residuals.hpp"
#include "gibbsgof/workspace.hpp"

namespace gibbsgof {

struct CovarianceEstimate {
  double lambda_inn = 0.0;
  std::optional<double> lambda_res;
  std::optional<Eigen::MatrixXd> sigma2;
  double delta_n = 0.0;
  double d_vee = 0.0;
  std::size_t cells_used = 0;
  long long reach = 0;
};

/// Number of cell layers ⌈D∨/δ_n⌉ coupled by the neighbourhood double sums.
inline long long neighbourhood_reach(double d_vee, double delta_n) {
  if (d_vee <= 0.0) return 0;
  return detail::ceil_tolerant(d_vee / delta_n);
}

/// |Λ|⁻¹ Σ_i Σ_{j: |j-i|∞ ≤ reach} a_i a_j over the cells of `grid`.
template <std::size_t Dim>
double neighbourhood_sum(const CellGrid<Dim>& grid, const Eigen::VectorXd& a, long long reach) {
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double inner = 0.0;
    for (std::size_t j : grid.neighborhood(i, reach)) inner += a[static_cast<Eigen::Index>(j)];
    total += a[static_cast<Eigen::Index>(i)] * inner;
  }
  return total / grid.window().volume();
}

/// Matrix version with one column of `a` per cell; symmetrized.
template <std::size_t Dim>
Eigen::MatrixXd neighbourhood_outer_sum(const CellGrid<Dim>& grid, const Eigen::MatrixXd& a, long long reach) {
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(a.rows(), a.rows());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Eigen::VectorXd inner = Eigen::VectorXd::Zero(a.rows());
    for (std::size_t j : grid.neighborhood(i, reach)) inner += a.col(static_cast<Eigen::Index>(j));
    total.noalias() += a.col(static_cast<Eigen::Index>(i)) * inner.transpose();
  }
  total /= grid.window().volume();
  return 0.5 * (total + total.transpose());
}

/// R̂_∞ on every tile: I_tile − LPL⁽¹⁾_tileᵀ Ŵ.
template <ExponentialModel Model>
Eigen::VectorXd r_infinity_tiles(const TileTerms& terms,
                                 const Eigen::Matrix<double, Model::num_stats, Eigen::Dynamic>& grad_tiles,
                                 const ParameterVector<Model::num_stats>& W_hat) {
  Eigen::VectorXd r = terms.values();
  r.noalias() -= grad_tiles.transpose() * W_hat;
  return r;
}

namespace detail {

template <ExponentialModel Model>
void check_covariance_inputs(const ObservedPattern<Model::dim>& pattern, const Model& model,
                             const CellGrid<Model::dim>& grid, double d_vee) {
  if (!(d_vee >= model.range())) {
    fail(ErrorKind::InvalidParameter, "D_vee must be at least the interaction range");
  }
  const Box<Model::dim> w = pattern.domain.window();
  if (!(w.contains_box(grid.window()) && grid.window().contains_box(w))) {
    fail(ErrorKind::InvalidGrid, "grid does not partition the observation window");
  }
}

}  // namespace detail

template <ExponentialModel Model>
double r_infinity_hat(const ObservedPattern<Model::dim>& pattern, const Model& model,
                      const ParameterVector<Model::num_stats>& theta_hat, const TestFunction<Model::dim>& h,
                      const Box<Model::dim>& cell, const ParameterVector<Model::num_stats>& W_hat,
                      const QuadratureSpec& quad = {}) {
  const double cap = h.kind == TestKind::EmptySpace ? h.radius : 0.0;
  const Workspace<Model> ws(model, pattern, {cell}, quad, cap);
  return r_infinity_tiles<Model>(tile_terms(ws, theta_hat, h), lpl_gradient_tiles(ws, theta_hat), W_hat)[0];
}

template <ExponentialModel Model>
double lambda_inn_hat(const ObservedPattern<Model::dim>& pattern, const Model& model,
                      const ParameterVector<Model::num_stats>& theta, const TestFunction<Model::dim>& h,
                      const CellGrid<Model::dim>& grid, double d_vee, const QuadratureSpec& quad = {}) {
  detail::check_covariance_inputs(pattern, model, grid, d_vee);
  const double cap = h.kind == TestKind::EmptySpace ? h.radius : 0.0;
  const Workspace<Model> ws(model, pattern, grid.boxes(), quad, cap);
  return neighbourhood_sum(grid, tile_terms(ws, theta, h).values(),
                           neighbourhood_reach(d_vee, grid.cell_side()));
}

template <ExponentialModel Model>
double lambda_res_hat(const ObservedPattern<Model::dim>& pattern, const Model& model,
                      const ParameterVector<Model::num_stats>& theta_hat, const TestFunction<Model::dim>& h,
                      const CellGrid<Model::dim>& grid, double d_vee,
                      const ParameterVector<Model::num_stats>& W_hat, const QuadratureSpec& quad = {}) {
  detail::check_covariance_inputs(pattern, model, grid, d_vee);
  const double cap = h.kind == TestKind::EmptySpace ? h.radius : 0.0;
  const Workspace<Model> ws(model, pattern, grid.boxes(), quad, cap);
  const Eigen::VectorXd r =
      r_infinity_tiles<Model>(tile_terms(ws, theta_hat, h), lpl_gradient_tiles(ws, theta_hat), W_hat);
  return neighbourhood_sum(grid, r, neighbourhood_reach(d_vee, grid.cell_side()));
}

template <ExponentialModel Model>
Eigen::MatrixXd sigma2_hat(const ObservedPattern<Model::dim>& pattern, const Model& model,
                           const ParameterVector<Model::num_stats>& theta_hat,
                           const std::vector<TestFunction<Model::dim>>& hs, const CellGrid<Model::dim>& grid,
                           double d_vee, const std::vector<ParameterVector<Model::num_stats>>& W_hats,
                           const QuadratureSpec& quad = {}) {
  detail::check_covariance_inputs(pattern, model, grid, d_vee);
  if (W_hats.size() != hs.size()) fail(ErrorKind::InvalidParameter, "need one W_hat per test function");
  const Workspace<Model> ws(model, pattern, grid.boxes(), quad, nearest_cap_for(hs));
  const auto grad = lpl_gradient_tiles(ws, theta_hat);
  Eigen::MatrixXd r(static_cast<Eigen::Index>(hs.size()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t s = 0; s < hs.size(); ++s) {
    r.row(static_cast<Eigen::Index>(s)) = r_infinity_tiles<Model>(tile_terms(ws, theta_hat, hs[s]), grad, W_hats[s]).transpose();
  }
  return neighbourhood_outer_sum(grid, r, neighbourhood_reach(d_vee, grid.cell_side()));
}

/// Σ₁^{-1/2} for Σ₁ = λ_Inn I + |J|⁻¹(λ_Res − λ_Inn) 𝟙𝟙ᵀ.
inline Eigen::MatrixXd sigma1_inv_sqrt(double lambda_inn, double lambda_res, std::size_t J) {
  if (!(lambda_inn > 0.0)) {
    fail(ErrorKind::DegenerateNormalization,
         "lambda_Inn = " + std::to_string(lambda_inn) + " is not positive");
  }
  if (!(lambda_res > 0.0)) {
    fail(ErrorKind::DegenerateNormalization,
         "lambda_Res = " + std::to_string(lambda_res) + " is not positive");
  }
  const auto n = static_cast<Eigen::Index>(J);
  const double a = 1.0 / std::sqrt(lambda_inn);
  const double b = 1.0 / std::sqrt(lambda_res);
  return a * Eigen::MatrixXd::Identity(n, n) +
         (b - a) / static_cast<double>(J) * Eigen::MatrixXd::Ones(n, n);
}

inline Eigen::MatrixXd sigma1(double lambda_inn, double lambda_res, std::size_t J) {
  const auto n = static_cast<Eigen::Index>(J);
  return lambda_inn * Eigen::MatrixXd::Identity(n, n) +
         (lambda_res - lambda_inn) / static_cast<double>(J) * Eigen::MatrixXd::Ones(n, n);
}

/// Symmetric inverse square root; eigenvalues at or below 1e-10 × the largest
/// are treated as degenerate.
inline Eigen::MatrixXd matrix_inv_sqrt(const Eigen::MatrixXd& a, double rel_threshold = 1e-10) {
  if (a.rows() != a.cols() || a.rows() == 0) fail(ErrorKind::InvalidParameter, "matrix must be square and nonempty");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0) || !(ev.minCoeff() > rel_threshold * top)) {
    std::ostringstream os;
    os << "matrix is not positive definite; spectrum:";
    for (Eigen::Index i = 0; i < ev.size(); ++i) os << ' ' << ev[i];
    fail(ErrorKind::DegenerateNormalization, os.str());
  }
  const Eigen::VectorXd d = ev.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace gibbsgof
