#pragma once

#include <Eigen/Core>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gibbsgof/disc_area.hpp"
#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"
#include "gibbsgof/spatial_index.hpp"

namespace gibbsgof {

template <int P>
using ParameterVector = Eigen::Matrix<double, P, 1>;

template <int P>
using StatVector = Eigen::Matrix<double, P, 1>;

/// Predicate deciding whether x may be removed from φ (non-hereditary models).
template <std::size_t Dim>
using RemovabilityPredicate = std::function<bool(const MarkedPoint<Dim>&, const Configuration<Dim>&)>;

/// State shared by the builtin models: mark space and removability hook.
template <std::size_t Dim>
class ModelBase {
 public:
  explicit ModelBase(MarkSet marks) : marks_(std::move(marks)) {}

  const MarkSet& marks() const { return marks_; }

  void set_removability(RemovabilityPredicate<Dim> pred) { removable_ = std::move(pred); }
  const RemovabilityPredicate<Dim>& removability() const { return removable_; }
  bool hereditary() const { return !removable_; }

 protected:
  void check_mark(const MarkedPoint<Dim>& x) const {
    if (!marks_.contains(x.mark)) {
      fail(ErrorKind::InvalidMark, "mark index " + std::to_string(x.mark) + " is not in the model's mark set");
    }
  }

 private:
  MarkSet marks_;
  RemovabilityPredicate<Dim> removable_;
};

/// Requirements on an exponential-family local-energy model
/// V(x|φ; θ) = θᵀ v(x|φ).
template <class M>
concept ExponentialModel = requires(const M& m, const MarkedPoint<M::dim>& x,
                                    const ConfigurationNeighbors<M::dim>& nb,
                                    const ParameterVector<M::num_stats>& theta) {
  { M::dim } -> std::convertible_to<std::size_t>;
  { M::num_stats } -> std::convertible_to<int>;
  { m.marks() } -> std::convertible_to<const MarkSet&>;
  { m.range() } -> std::convertible_to<double>;
  { m.stats(x, nb) } -> std::convertible_to<StatVector<M::num_stats>>;
  { m.forbidden(x, nb) } -> std::convertible_to<bool>;
  { m.admissible(theta) } -> std::convertible_to<bool>;
  { m.project(theta) } -> std::convertible_to<ParameterVector<M::num_stats>>;
  { m.stability_constant(theta) } -> std::convertible_to<double>;
  { m.lower_bounds() } -> std::convertible_to<ParameterVector<M::num_stats>>;
  { m.stat_names() } -> std::convertible_to<std::vector<std::string>>;
  { m.name() } -> std::convertible_to<std::string>;
};

/// Homogeneous (marked) Poisson process: v ≡ 1, range 0.
template <std::size_t Dim>
class PoissonModel : public ModelBase<Dim> {
 public:
  static constexpr std::size_t dim = Dim;
  static constexpr int num_stats = 1;
  using Param = ParameterVector<1>;
  using Stats = StatVector<1>;

  explicit PoissonModel(MarkSet marks = MarkSet()) : ModelBase<Dim>(std::move(marks)) {}

  std::string name() const { return "poisson"; }
  std::vector<std::string> stat_names() const { return {"count"}; }
  double range() const { return 0.0; }

  template <class Neighbors>
  Stats stats(const MarkedPoint<Dim>& x, const Neighbors&) const {
    this->check_mark(x);
    return Stats::Ones();
  }

  template <class Neighbors>
  bool forbidden(const MarkedPoint<Dim>&, const Neighbors&) const {
    return false;
  }

  bool admissible(const Param& theta) const { return theta.allFinite(); }
  Param project(const Param& theta) const { return theta; }
  Param lower_bounds() const { return Param::Constant(-std::numeric_limits<double>::infinity()); }
  double stability_constant(const Param& theta) const { return std::max(0.0, -theta[0]); }
  // ω with ωᵀv ≡ 1.
  std::optional<Param> unit_combination() const { return Param::Ones(); }
};

/// Two-type marked Strauss process with marks {1, 2}. Statistics are
/// (1[m=1], 1[m=2], n¹¹, n¹², n²²) where the pair counts tally neighbours at
/// distance in [hard_core, D^{m,m'}]. Without a hard core the pair
/// parameters must be nonnegative (inhibition).
template <std::size_t Dim>
class TwoTypeStrauss : public ModelBase<Dim> {
 public:
  static constexpr std::size_t dim = Dim;
  static constexpr int num_stats = 5;
  using Param = ParameterVector<5>;
  using Stats = StatVector<5>;

  TwoTypeStrauss(double range11, double range12, double range22, double hard_core = 0.0)
      : ModelBase<Dim>(MarkSet::uniform({"1", "2"})),
        r11_(range11),
        r12_(range12),
        r22_(range22),
        hard_core_(hard_core) {
    if (!(range11 >= 0.0 && range12 >= 0.0 && range22 >= 0.0 && hard_core >= 0.0)) {
      fail(ErrorKind::InvalidParameter, "Strauss ranges must be nonnegative");
    }
    if (hard_core > std::min({range11, range12, range22})) {
      fail(ErrorKind::InvalidParameter, "hard-core distance exceeds an interaction range");
    }
  }

  std::string name() const { return "strauss2"; }
  std::vector<std::string> stat_names() const {
    return {"theta1_1", "theta1_2", "theta2_11", "theta2_12", "theta2_22"};
  }
  double range() const { return std::max({r11_, r12_, r22_}); }
  double range11() const { return r11_; }
  double range12() const { return r12_; }
  double range22() const { return r22_; }
  double hard_core() const { return hard_core_; }

  template <class Neighbors>
  Stats stats(const MarkedPoint<Dim>& x, const Neighbors& nb) const {
    this->check_mark(x);
    Stats v = Stats::Zero();
    const bool first = x.mark == 0;
    v[first ? 0 : 1] = 1.0;
    const double lo2 = hard_core_ * hard_core_;
    const double same = first ? r11_ : r22_;
    const double same2 = same * same;
    const double cross2 = r12_ * r12_;
    nb.for_each_within(x.position, range(), [&](const MarkedPoint<Dim>& y) {
      const double d2 = squared_distance<Dim>(x.position, y.position);
      if (d2 < lo2) return;
      if (y.mark == x.mark) {
        if (d2 <= same2) v[first ? 2 : 4] += 1.0;
      } else if (d2 <= cross2) {
        v[3] += 1.0;
      }
    });
    return v;
  }

  template <class Neighbors>
  bool forbidden(const MarkedPoint<Dim>& x, const Neighbors& nb) const {
    if (hard_core_ <= 0.0) return false;
    bool hit = false;
    const double h2 = hard_core_ * hard_core_;
    nb.for_each_within(x.position, hard_core_, [&](const MarkedPoint<Dim>& y) {
      if (squared_distance<Dim>(x.position, y.position) < h2) hit = true;
    });
    return hit;
  }

  bool admissible(const Param& theta) const {
    if (!theta.allFinite()) return false;
    if (hard_core_ > 0.0) return true;
    return theta.tail<3>().minCoeff() >= 0.0;
  }

  Param project(const Param& theta) const { return theta.cwiseMax(lower_bounds()); }

  Param lower_bounds() const {
    const double inf = std::numeric_limits<double>::infinity();
    Param lb = Param::Constant(-inf);
    if (hard_core_ <= 0.0) lb.tail<3>().setZero();
    return lb;
  }

  double stability_constant(const Param& theta) const {
    double k = std::max({0.0, -theta[0], -theta[1]});
    if (hard_core_ > 0.0) {
      // Points within range D that keep pairwise distance ≥ hard_core fit in
      // disjoint balls of radius hard_core/2 inside B(x, D + hard_core/2).
      const double packing = detail::ipow((range() + 0.5 * hard_core_) / (0.5 * hard_core_), Dim);
      double worst = 0.0;
      for (int i = 2; i < 5; ++i) worst = std::max(worst, -theta[i]);
      k += worst * std::floor(packing);
    }
    return k;
  }

  std::optional<Param> unit_combination() const {
    Param w = Param::Zero();
    w[0] = w[1] = 1.0;
    return w;
  }

 private:
  double r11_, r12_, r22_, hard_core_;
};

/// Planar area-interaction process with disc radius R: v = (1, added disc area).
class AreaInteraction : public ModelBase<2> {
 public:
  static constexpr std::size_t dim = 2;
  static constexpr int num_stats = 2;
  using Param = ParameterVector<2>;
  using Stats = StatVector<2>;

  explicit AreaInteraction(double disc_radius) : ModelBase<2>(MarkSet()), radius_(disc_radius) {
    if (!(disc_radius > 0.0)) fail(ErrorKind::InvalidParameter, "disc radius must be positive");
  }

  std::string name() const { return "area"; }
  std::vector<std::string> stat_names() const { return {"count", "added_area"}; }
  double range() const { return 2.0 * radius_; }
  double disc_radius() const { return radius_; }

  template <class Neighbors>
  Stats stats(const MarkedPoint<2>& x, const Neighbors& nb) const {
    check_mark(x);
    std::vector<Vec<2>> near;
    nb.for_each_within(x.position, range(), [&](const MarkedPoint<2>& y) { near.push_back(y.position); });
    Stats v;
    v << 1.0, added_disc_area(radius_, x.position, near);
    return v;
  }

  template <class Neighbors>
  bool forbidden(const MarkedPoint<2>&, const Neighbors&) const {
    return false;
  }

  bool admissible(const Param& theta) const { return theta.allFinite(); }
  Param project(const Param& theta) const { return theta; }
  Param lower_bounds() const { return Param::Constant(-std::numeric_limits<double>::infinity()); }

  // The added area ranges over [0, πR²], so V is minimised at an endpoint.
  double stability_constant(const Param& theta) const {
    const double full = std::numbers::pi * radius_ * radius_;
    return std::max({0.0, -theta[0], -(theta[0] + theta[1] * full)});
  }

  std::optional<Param> unit_combination() const { return Param(1.0, 0.0); }

 private:
  double radius_;
};

/// v(x | φ) by brute force over φ; x must not belong to φ.
template <ExponentialModel Model>
StatVector<Model::num_stats> sufficient_stats(const Model& model, const MarkedPoint<Model::dim>& x,
                                              const Configuration<Model::dim>& phi) {
  return model.stats(x, ConfigurationNeighbors<Model::dim>{&phi});
}

template <ExponentialModel Model>
double local_energy(const Model& model, const ParameterVector<Model::num_stats>& theta,
                    const MarkedPoint<Model::dim>& x, const Configuration<Model::dim>& phi) {
  const ConfigurationNeighbors<Model::dim> nb{&phi};
  if (model.forbidden(x, nb)) return std::numeric_limits<double>::infinity();
  return theta.dot(model.stats(x, nb));
}

template <int P>
ParameterVector<P> to_parameter(std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(P)) {
    fail(ErrorKind::InvalidParameter, "parameter vector has length " + std::to_string(values.size()) +
                                          ", model expects " + std::to_string(P));
  }
  ParameterVector<P> theta;
  for (int i = 0; i < P; ++i) theta[i] = values[static_cast<std::size_t>(i)];
  return theta;
}

template <ExponentialModel Model>
double local_energy(const Model& model, std::span<const double> theta, const MarkedPoint<Model::dim>& x,
                    const Configuration<Model::dim>& phi) {
  return local_energy(model, to_parameter<Model::num_stats>(theta), x, phi);
}

template <ExponentialModel Model>
double stability_constant(const Model& model, const ParameterVector<Model::num_stats>& theta) {
  if (!model.admissible(theta)) fail(ErrorKind::InvalidParameter, "parameter is not admissible");
  return model.stability_constant(theta);
}

template <ExponentialModel Model>
bool is_removable(const Model& model, const MarkedPoint<Model::dim>& x,
                  const Configuration<Model::dim>& phi) {
  const auto& pred = model.removability();
  return !pred || pred(x, phi);
}

/// The points of φ_Λ that may be removed from φ.
template <ExponentialModel Model>
Configuration<Model::dim> removable_points(const Model& model, const Configuration<Model::dim>& phi,
                                           const Box<Model::dim>& region) {
  const auto local = restrict(phi, region);
  if (model.hereditary()) return local;
  std::vector<MarkedPoint<Model::dim>> kept;
  for (const auto& p : local) {
    if (is_removable(model, p, phi)) kept.push_back(p);
  }
  Configuration<Model::dim> out;
  if (!kept.empty()) out = Configuration<Model::dim>(std::move(kept));
  return out;
}

}  // namespace gibbsgof
