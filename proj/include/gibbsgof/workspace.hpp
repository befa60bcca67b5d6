#pragma once

#include <Eigen/Core>
#include <limits>
#include <string>
#include <vector>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"
#include "gibbsgof/models.hpp"
#include "gibbsgof/quadrature.hpp"
#include "gibbsgof/spatial_index.hpp"
#include "gibbsgof/test_function.hpp"

namespace gibbsgof {

/// Throws unless `region ⊕ range` lies inside the observed extended window.
template <std::size_t Dim>
void check_guard(const ObservationDomain<Dim>& domain, const Box<Dim>& region, double range) {
  if (!domain.extended().contains_box(region.dilated(range))) {
    fail(ErrorKind::InsufficientGuard,
         "region dilated by the interaction range " + std::to_string(range) + " leaves the observed domain");
  }
}

/// Sufficient statistics, nearest distances and weights at the quadrature
/// nodes and data points of a family of disjoint tiles. Every integral and
/// sum of the pipeline is assembled from these tables, so per-tile pieces
/// add up exactly to the union.
template <ExponentialModel Model>
class Workspace {
 public:
  static constexpr std::size_t dim = Model::dim;
  static constexpr int num_stats = Model::num_stats;
  using Point = MarkedPoint<dim>;
  using StatMatrix = Eigen::Matrix<double, num_stats, Eigen::Dynamic>;

  Workspace(const Model& model, const ObservedPattern<dim>& pattern, std::vector<Box<dim>> tiles,
            QuadratureSpec spec = {}, double nearest_cap = 0.0)
      : model_(&model), pattern_(&pattern), tiles_(std::move(tiles)), spec_(spec), nearest_cap_(nearest_cap) {
    if (tiles_.empty()) fail(ErrorKind::InvalidGrid, "workspace needs at least one tile");
    for (const auto& t : tiles_) check_guard(pattern.domain, t, model.range());
    const double h = std::max({model.range(), nearest_cap_, pattern.domain.extended().side / 64.0});
    const SpatialIndex<dim> index(pattern.points, h);
    build_nodes(index);
    build_points(index);
  }

  const Model& model() const { return *model_; }
  const ObservedPattern<dim>& pattern() const { return *pattern_; }
  const std::vector<Box<dim>>& tiles() const { return tiles_; }
  std::size_t num_tiles() const { return tiles_.size(); }
  const QuadratureSpec& quadrature() const { return spec_; }
  double nearest_cap() const { return nearest_cap_; }

  double volume() const {
    double v = 0.0;
    for (const auto& t : tiles_) v += t.volume();
    return v;
  }

  // Nodes of tile t occupy [node_begin(t), node_begin(t + 1)).
  std::size_t node_begin(std::size_t t) const { return node_offsets_[t]; }
  std::size_t num_nodes() const { return node_weight_.size(); }
  const StatMatrix& node_stats() const { return node_stats_; }
  const std::vector<double>& node_weight() const { return node_weight_; }
  const std::vector<double>& node_nearest() const { return node_nearest_; }
  const std::vector<char>& node_forbidden() const { return node_forbidden_; }
  const std::vector<Point>& nodes() const { return nodes_; }

  // Data points lying in some tile.
  std::size_t num_points() const { return point_index_.size(); }
  const StatMatrix& point_stats() const { return point_stats_; }
  const std::vector<double>& point_nearest() const { return point_nearest_; }
  const std::vector<char>& point_forbidden() const { return point_forbidden_; }
  const std::vector<char>& point_removable() const { return point_removable_; }
  const std::vector<std::size_t>& point_tile() const { return point_tile_; }
  const std::vector<std::size_t>& point_index() const { return point_index_; }

  double node_energy(std::size_t i, const ParameterVector<num_stats>& theta) const {
    if (node_forbidden_[i]) return std::numeric_limits<double>::infinity();
    return theta.dot(node_stats_.col(static_cast<Eigen::Index>(i)));
  }

  double point_energy(std::size_t i, const ParameterVector<num_stats>& theta) const {
    if (point_forbidden_[i]) return std::numeric_limits<double>::infinity();
    return theta.dot(point_stats_.col(static_cast<Eigen::Index>(i)));
  }

 private:
  void build_nodes(const SpatialIndex<dim>& index) {
    const IndexedNeighbors<dim> nb{&index};
    std::size_t expected = 0;
    for (const auto& t : tiles_) {
      expected += detail::ipow<std::size_t>(static_cast<std::size_t>(spec_.nodes_per_side(t.side)), dim) *
                  model_->marks().size();
    }
    node_stats_.resize(num_stats, static_cast<Eigen::Index>(expected));
    node_weight_.reserve(expected);
    nodes_.reserve(expected);
    node_offsets_.push_back(0);
    std::size_t col = 0;
    for (const auto& t : tiles_) {
      for_each_node<dim>(t, model_->marks(), spec_, [&](const Point& node, double w) {
        node_stats_.col(static_cast<Eigen::Index>(col++)) = model_->stats(node, nb);
        node_forbidden_.push_back(model_->forbidden(node, nb) ? 1 : 0);
        node_nearest_.push_back(nearest_cap_ > 0.0 ? index.nearest_within(node.position, nearest_cap_)
                                                   : std::numeric_limits<double>::infinity());
        node_weight_.push_back(w);
        nodes_.push_back(node);
      });
      node_offsets_.push_back(col);
    }
  }

  void build_points(const SpatialIndex<dim>& index) {
    const auto& phi = pattern_->points;
    std::vector<std::size_t> members;
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      for (std::size_t t = 0; t < tiles_.size(); ++t) {
        if (tiles_[t].contains(phi[i].position)) {
          members.push_back(i);
          owner.push_back(t);
          break;
        }
      }
    }
    point_stats_.resize(num_stats, static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t i = members[k];
      const IndexedNeighbors<dim> nb{&index, i};
      point_stats_.col(static_cast<Eigen::Index>(k)) = model_->stats(phi[i], nb);
      point_forbidden_.push_back(model_->forbidden(phi[i], nb) ? 1 : 0);
      point_nearest_.push_back(nearest_cap_ > 0.0 ? index.nearest_within(phi[i].position, nearest_cap_, i)
                                                  : std::numeric_limits<double>::infinity());
      point_removable_.push_back(is_removable(*model_, phi[i], phi) ? 1 : 0);
    }
    point_index_ = std::move(members);
    point_tile_ = std::move(owner);
  }

  const Model* model_;
  const ObservedPattern<dim>* pattern_;
  std::vector<Box<dim>> tiles_;
  QuadratureSpec spec_;
  double nearest_cap_;

  std::vector<std::size_t> node_offsets_;
  StatMatrix node_stats_;
  std::vector<double> node_weight_;
  std::vector<double> node_nearest_;
  std::vector<char> node_forbidden_;
  std::vector<Point> nodes_;

  StatMatrix point_stats_;
  std::vector<double> point_nearest_;
  std::vector<char> point_forbidden_;
  std::vector<char> point_removable_;
  std::vector<std::size_t> point_tile_;
  std::vector<std::size_t> point_index_;
};

/// Largest empty-space radius among the test functions (0 when none).
template <std::size_t Dim>
double nearest_cap_for(const std::vector<TestFunction<Dim>>& hs) {
  double cap = 0.0;
  for (const auto& h : hs) {
    if (h.kind == TestKind::EmptySpace) cap = std::max(cap, h.radius);
  }
  return cap;
}

}  // namespace gibbsgof
