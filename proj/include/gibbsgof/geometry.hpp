#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gibbsgof/errors.hpp"

namespace gibbsgof {

template <std::size_t Dim>
using Vec = std::array<double, Dim>;

// Index into a model's MarkSet.
using Mark = std::uint32_t;

template <std::size_t Dim>
struct MarkedPoint {
  Vec<Dim> position{};
  Mark mark = 0;

  friend bool operator==(const MarkedPoint&, const MarkedPoint&) = default;
};

template <std::size_t Dim>
inline double squared_distance(const Vec<Dim>& a, const Vec<Dim>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < Dim; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

template <std::size_t Dim>
inline double distance(const Vec<Dim>& a, const Vec<Dim>& b) {
  return std::sqrt(squared_distance<Dim>(a, b));
}

namespace detail {

// floor/ceil that forgive representation error in ratios such as 2.0 / 0.1.
inline long long floor_tolerant(double x) {
  return static_cast<long long>(std::floor(x + 1e-9));
}
inline long long ceil_tolerant(double x) {
  return static_cast<long long>(std::ceil(x - 1e-9));
}

template <class Int>
inline Int ipow(Int base, std::size_t exp) {
  Int r = 1;
  for (std::size_t k = 0; k < exp; ++k) r *= base;
  return r;
}

}  // namespace detail

/// Finite enumerated mark space with a probability weight per mark.
class MarkSet {
 public:
  MarkSet() : MarkSet({"0"}, {1.0}) {}

  MarkSet(std::vector<std::string> labels, std::vector<double> weights)
      : labels_(std::move(labels)), weights_(std::move(weights)) {
    if (labels_.empty() || labels_.size() != weights_.size()) {
      fail(ErrorKind::InvalidMark, "mark set needs one weight per label");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) fail(ErrorKind::InvalidMark, "mark weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      fail(ErrorKind::InvalidMark, "mark weights must sum to 1");
    }
  }

  static MarkSet uniform(std::vector<std::string> labels) {
    const auto n = labels.size();
    return MarkSet(std::move(labels), std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  std::size_t size() const { return labels_.size(); }
  const std::string& label(Mark m) const { return labels_.at(m); }
  double weight(Mark m) const { return weights_.at(m); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<double>& weights() const { return weights_; }
  bool contains(Mark m) const { return m < labels_.size(); }

  std::optional<Mark> index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == label) return static_cast<Mark>(i);
    }
    return std::nullopt;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<double> weights_;
};

/// Axis-aligned cube [lower, lower + side)^Dim.
template <std::size_t Dim>
struct Box {
  Vec<Dim> lower{};
  double side = 0.0;

  static Box centered(const Vec<Dim>& center, double side) {
    Box b;
    for (std::size_t k = 0; k < Dim; ++k) b.lower[k] = center[k] - 0.5 * side;
    b.side = side;
    return b;
  }

  double upper(std::size_t k) const { return lower[k] + side; }
  double volume() const { return detail::ipow(side, Dim); }

  Vec<Dim> center() const {
    Vec<Dim> c;
    for (std::size_t k = 0; k < Dim; ++k) c[k] = lower[k] + 0.5 * side;
    return c;
  }

  // Half-open: lower faces inclusive, upper faces exclusive.
  bool contains(const Vec<Dim>& x) const {
    for (std::size_t k = 0; k < Dim; ++k) {
      if (x[k] < lower[k] || x[k] >= lower[k] + side) return false;
    }
    return true;
  }

  bool contains_box(const Box& other, double tol = 1e-9) const {
    for (std::size_t k = 0; k < Dim; ++k) {
      if (other.lower[k] < lower[k] - tol) return false;
      if (other.upper(k) > upper(k) + tol) return false;
    }
    return true;
  }

  Box dilated(double margin) const {
    Box b = *this;
    for (std::size_t k = 0; k < Dim; ++k) b.lower[k] -= margin;
    b.side += 2.0 * margin;
    return b;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Observation window Λ together with the guard margin D⁺ in which points
/// are observed but only condition the computation.
template <std::size_t Dim>
struct ObservationDomain {
  Vec<Dim> center{};
  double side = 1.0;
  double guard = 0.0;

  static ObservationDomain from_window(const Box<Dim>& window, double guard) {
    return ObservationDomain{window.center(), window.side, guard};
  }

  Box<Dim> window() const { return Box<Dim>::centered(center, side); }
  Box<Dim> extended() const { return window().dilated(guard); }
};

/// Finite simple marked configuration.
template <std::size_t Dim>
class Configuration {
 public:
  using value_type = MarkedPoint<Dim>;

  Configuration() = default;

  explicit Configuration(std::vector<MarkedPoint<Dim>> points) : points_(std::move(points)) {
    check_simple();
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const MarkedPoint<Dim>& operator[](std::size_t i) const { return points_[i]; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }
  const std::vector<MarkedPoint<Dim>>& points() const { return points_; }

  Configuration with_point(const MarkedPoint<Dim>& x) const {
    auto pts = points_;
    pts.push_back(x);
    return Configuration(std::move(pts));
  }

  Configuration without(std::size_t index) const {
    Configuration c;
    c.points_.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (i != index) c.points_.push_back(points_[i]);
    }
    return c;
  }

  Configuration translated(const Vec<Dim>& shift) const {
    Configuration c;
    c.points_ = points_;
    for (auto& p : c.points_) {
      for (std::size_t k = 0; k < Dim; ++k) p.position[k] += shift[k];
    }
    return c;
  }

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  void check_simple() const {
    std::vector<std::size_t> order(points_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return points_[a].position < points_[b].position;
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (points_[order[i]].position == points_[order[i - 1]].position) {
        fail(ErrorKind::InvalidConfiguration, "configuration is not simple: duplicated position");
      }
    }
  }

  std::vector<MarkedPoint<Dim>> points_;
};

/// A configuration together with the domain on which it was observed.
template <std::size_t Dim>
struct ObservedPattern {
  Configuration<Dim> points;
  ObservationDomain<Dim> domain;
};

template <std::size_t Dim>
Configuration<Dim> restrict(const Configuration<Dim>& config, const Box<Dim>& region) {
  std::vector<MarkedPoint<Dim>> kept;
  for (const auto& p : config) {
    if (region.contains(p.position)) kept.push_back(p);
  }
  // A subset of a simple configuration is simple.
  Configuration<Dim> out;
  if (!kept.empty()) out = Configuration<Dim>(std::move(kept));
  return out;
}

/// Euclidean distance from x to the closest point of phi, marks ignored.
template <std::size_t Dim>
double nearest_distance(const MarkedPoint<Dim>& x, const Configuration<Dim>& phi) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : phi) best = std::min(best, squared_distance<Dim>(x.position, p.position));
  return std::sqrt(best);
}

/// Partition of a cubic window into congruent cells of side δ_n, optionally
/// grouped into |J| congruent subdomains. Cells are stored in lexicographic
/// order of their global multi-index (first coordinate slowest).
template <std::size_t Dim>
class CellGrid {
 public:
  using Index = std::array<long long, Dim>;

  struct Cell {
    Box<Dim> box;
    Index index{};
    std::size_t subdomain = 0;
  };

  CellGrid(Box<Dim> window, double cell_side, long long cells_per_side,
           long long subdomains_per_side)
      : window_(window),
        cell_side_(cell_side),
        cells_per_side_(cells_per_side),
        subdomains_per_side_(subdomains_per_side) {
    const long long per_sub = cells_per_side_ / subdomains_per_side_;
    const auto total = detail::ipow<std::size_t>(static_cast<std::size_t>(cells_per_side_), Dim);
    cells_.reserve(total);
    for (std::size_t lin = 0; lin < total; ++lin) {
      Cell c;
      std::size_t rem = lin;
      for (std::size_t k = Dim; k-- > 0;) {
        c.index[k] = static_cast<long long>(rem % static_cast<std::size_t>(cells_per_side_));
        rem /= static_cast<std::size_t>(cells_per_side_);
      }
      std::size_t sub = 0;
      for (std::size_t k = 0; k < Dim; ++k) {
        c.box.lower[k] = window_.lower[k] + static_cast<double>(c.index[k]) * cell_side_;
        sub = sub * static_cast<std::size_t>(subdomains_per_side_) +
              static_cast<std::size_t>(c.index[k] / per_sub);
      }
      c.box.side = cell_side_;
      c.subdomain = sub;
      cells_.push_back(c);
    }
  }

  const Box<Dim>& window() const { return window_; }
  double cell_side() const { return cell_side_; }
  long long cells_per_side() const { return cells_per_side_; }
  std::size_t size() const { return cells_.size(); }
  const Cell& operator[](std::size_t i) const { return cells_[i]; }
  const std::vector<Cell>& cells() const { return cells_; }

  std::size_t num_subdomains() const {
    return detail::ipow<std::size_t>(static_cast<std::size_t>(subdomains_per_side_), Dim);
  }

  Box<Dim> subdomain_box(std::size_t j) const {
    const double sub_side = window_.side / static_cast<double>(subdomains_per_side_);
    Box<Dim> b;
    b.side = sub_side;
    std::size_t rem = j;
    for (std::size_t k = Dim; k-- > 0;) {
      const auto idx = rem % static_cast<std::size_t>(subdomains_per_side_);
      rem /= static_cast<std::size_t>(subdomains_per_side_);
      b.lower[k] = window_.lower[k] + static_cast<double>(idx) * sub_side;
    }
    return b;
  }

  std::vector<std::size_t> cells_in_subdomain(std::size_t j) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (cells_[i].subdomain == j) out.push_back(i);
    }
    return out;
  }

  std::vector<Box<Dim>> boxes() const {
    std::vector<Box<Dim>> out;
    out.reserve(cells_.size());
    for (const auto& c : cells_) out.push_back(c.box);
    return out;
  }

  std::size_t linear_index(const Index& idx) const {
    std::size_t lin = 0;
    for (std::size_t k = 0; k < Dim; ++k) {
      lin = lin * static_cast<std::size_t>(cells_per_side_) + static_cast<std::size_t>(idx[k]);
    }
    return lin;
  }

  // Cells j with max_k |j_k - i_k| <= reach, in lexicographic order.
  std::vector<std::size_t> neighborhood(std::size_t i, long long reach) const {
    std::vector<std::size_t> out;
    const Index& centre = cells_[i].index;
    Index lo, hi;
    for (std::size_t k = 0; k < Dim; ++k) {
      lo[k] = std::max<long long>(0, centre[k] - reach);
      hi[k] = std::min<long long>(cells_per_side_ - 1, centre[k] + reach);
    }
    Index cur = lo;
    while (true) {
      out.push_back(linear_index(cur));
      std::size_t k = Dim;
      while (k-- > 0) {
        if (cur[k] < hi[k]) {
          ++cur[k];
          break;
        }
        cur[k] = lo[k];
        if (k == 0) return out;
      }
    }
  }

 private:
  Box<Dim> window_;
  double cell_side_;
  long long cells_per_side_;
  long long subdomains_per_side_;
  std::vector<Cell> cells_;
};

/// Splits the window into |J| congruent subdomains and grids each with cells
/// of side δ_n = L_sub / floor(L_sub / δ).
template <std::size_t Dim>
CellGrid<Dim> partition_window(const ObservationDomain<Dim>& domain, double delta,
                               std::size_t subdomains = 1) {
  const Box<Dim> window = domain.window();
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    fail(ErrorKind::InvalidGrid, "cell side must be positive, got " + std::to_string(delta));
  }
  if (subdomains == 0) fail(ErrorKind::InvalidGrid, "need at least one subdomain");
  const double root = std::round(std::pow(static_cast<double>(subdomains), 1.0 / Dim));
  const auto q = static_cast<long long>(root);
  if (q < 1 || detail::ipow<std::size_t>(static_cast<std::size_t>(q), Dim) != subdomains) {
    fail(ErrorKind::InvalidGrid,
         "subdomain count " + std::to_string(subdomains) + " is not a perfect power of the dimension");
  }
  const double sub_side = window.side / static_cast<double>(q);
  if (delta > sub_side * (1.0 + 1e-12)) {
    fail(ErrorKind::InvalidGrid, "cell side " + std::to_string(delta) + " exceeds subdomain side " +
                                     std::to_string(sub_side));
  }
  const long long per_sub = std::max<long long>(1, detail::floor_tolerant(sub_side / delta));
  const double cell_side = sub_side / static_cast<double>(per_sub);
  return CellGrid<Dim>(window, cell_side, per_sub * q, q);
}

}  // namespace gibbsgof
