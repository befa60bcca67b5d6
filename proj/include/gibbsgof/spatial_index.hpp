#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gibbsgof/geometry.hpp"

namespace gibbsgof {

namespace detail {

template <std::size_t Dim>
inline std::uint64_t pack_cell(const std::array<long long, Dim>& c) {
  static_assert(Dim >= 1 && Dim <= 3, "cell keys support up to three dimensions");
  constexpr long long offset = 1LL << 20;
  std::uint64_t key = 0;
  for (std::size_t k = 0; k < Dim; ++k) {
    key = (key << 21) | static_cast<std::uint64_t>((c[k] + offset) & ((1LL << 21) - 1));
  }
  return key;
}

template <std::size_t Dim>
inline std::array<long long, Dim> cell_of(const Vec<Dim>& x, double h) {
  std::array<long long, Dim> c;
  for (std::size_t k = 0; k < Dim; ++k) c[k] = static_cast<long long>(std::floor(x[k] / h));
  return c;
}

// Visits every integer cell in the box [lo, hi] (inclusive).
template <std::size_t Dim, class F>
inline void for_each_cell(const std::array<long long, Dim>& lo, const std::array<long long, Dim>& hi,
                          F&& f) {
  std::array<long long, Dim> cur = lo;
  while (true) {
    f(cur);
    std::size_t k = Dim;
    while (k-- > 0) {
      if (cur[k] < hi[k]) {
        ++cur[k];
        break;
      }
      cur[k] = lo[k];
      if (k == 0) return;
    }
  }
}

}  // namespace detail

/// Uniform hash grid over an immutable configuration. Queries visit the
/// points within a closed ball, optionally skipping one index.
template <std::size_t Dim>
class SpatialIndex {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  SpatialIndex(const Configuration<Dim>& config, double cell_size)
      : config_(&config), h_(cell_size > 0.0 ? cell_size : 1.0) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(config.size());
    for (std::size_t i = 0; i < config.size(); ++i) {
      keyed.emplace_back(detail::pack_cell<Dim>(detail::cell_of<Dim>(config[i].position, h_)), i);
    }
    std::sort(keyed.begin(), keyed.end());
    order_.reserve(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      order_.push_back(keyed[i].second);
      auto [it, inserted] = buckets_.try_emplace(keyed[i].first, i, i + 1);
      if (!inserted) it->second.second = i + 1;
    }
  }

  const Configuration<Dim>& configuration() const { return *config_; }

  // f(index, point, squared distance)
  template <class F>
  void for_each_within(const Vec<Dim>& x, double radius, F&& f, std::size_t exclude = npos) const {
    if (!(radius >= 0.0) || config_->empty()) return;
    std::array<long long, Dim> lo, hi;
    for (std::size_t k = 0; k < Dim; ++k) {
      lo[k] = static_cast<long long>(std::floor((x[k] - radius) / h_));
      hi[k] = static_cast<long long>(std::floor((x[k] + radius) / h_));
    }
    const double r2 = radius * radius;
    detail::for_each_cell<Dim>(lo, hi, [&](const std::array<long long, Dim>& c) {
      auto it = buckets_.find(detail::pack_cell<Dim>(c));
      if (it == buckets_.end()) return;
      for (std::size_t s = it->second.first; s < it->second.second; ++s) {
        const std::size_t i = order_[s];
        if (i == exclude) continue;
        const auto& p = (*config_)[i];
        const double d2 = squared_distance<Dim>(x, p.position);
        if (d2 <= r2) f(i, p, d2);
      }
    });
  }

  // Distance to the nearest point within `cap`, +infinity when there is none.
  double nearest_within(const Vec<Dim>& x, double cap, std::size_t exclude = npos) const {
    double best = std::numeric_limits<double>::infinity();
    for_each_within(
        x, cap, [&](std::size_t, const MarkedPoint<Dim>&, double d2) { best = std::min(best, d2); },
        exclude);
    return std::sqrt(best);
  }

 private:
  const Configuration<Dim>* config_;
  double h_;
  std::vector<std::size_t> order_;
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> buckets_;
};

/// Neighbour source used by models: points of an indexed configuration,
/// optionally with one of them removed (the φ \ x of the sum terms).
template <std::size_t Dim>
struct IndexedNeighbors {
  const SpatialIndex<Dim>* index;
  std::size_t exclude = SpatialIndex<Dim>::npos;

  template <class F>
  void for_each_within(const Vec<Dim>& x, double radius, F&& f) const {
    index->for_each_within(
        x, radius, [&](std::size_t, const MarkedPoint<Dim>& p, double) { f(p); }, exclude);
  }
};

/// Brute-force neighbour source over a configuration.
template <std::size_t Dim>
struct ConfigurationNeighbors {
  const Configuration<Dim>* config;

  template <class F>
  void for_each_within(const Vec<Dim>& x, double radius, F&& f) const {
    const double r2 = radius * radius;
    for (const auto& p : *config) {
      if (squared_distance<Dim>(x, p.position) <= r2) f(p);
    }
  }
};

/// Hash grid supporting insertion and removal; backs the birth-death sampler.
template <std::size_t Dim>
class DynamicGrid {
 public:
  explicit DynamicGrid(double cell_size) : h_(cell_size > 0.0 ? cell_size : 1.0) {}

  std::size_t size() const { return points_.size(); }
  const MarkedPoint<Dim>& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<MarkedPoint<Dim>>& points() const { return points_; }

  void insert(const MarkedPoint<Dim>& p) {
    const auto key = detail::pack_cell<Dim>(detail::cell_of<Dim>(p.position, h_));
    buckets_[key].push_back(points_.size());
    keys_.push_back(key);
    points_.push_back(p);
  }

  void erase(std::size_t i) {
    const std::size_t last = points_.size() - 1;
    drop_from_bucket(keys_[i], i);
    if (i != last) {
      auto& moved = buckets_[keys_[last]];
      for (auto& idx : moved) {
        if (idx == last) {
          idx = i;
          break;
        }
      }
      points_[i] = points_[last];
      keys_[i] = keys_[last];
    }
    points_.pop_back();
    keys_.pop_back();
  }

  template <class F>
  void for_each_within(const Vec<Dim>& x, double radius, F&& f,
                       std::size_t exclude = SpatialIndex<Dim>::npos) const {
    if (!(radius >= 0.0) || points_.empty()) return;
    std::array<long long, Dim> lo, hi;
    for (std::size_t k = 0; k < Dim; ++k) {
      lo[k] = static_cast<long long>(std::floor((x[k] - radius) / h_));
      hi[k] = static_cast<long long>(std::floor((x[k] + radius) / h_));
    }
    const double r2 = radius * radius;
    detail::for_each_cell<Dim>(lo, hi, [&](const std::array<long long, Dim>& c) {
      auto it = buckets_.find(detail::pack_cell<Dim>(c));
      if (it == buckets_.end()) return;
      for (std::size_t i : it->second) {
        if (i == exclude) continue;
        if (squared_distance<Dim>(x, points_[i].position) <= r2) f(points_[i]);
      }
    });
  }

 private:
  void drop_from_bucket(std::uint64_t key, std::size_t i) {
    auto& b = buckets_[key];
    for (std::size_t s = 0; s < b.size(); ++s) {
      if (b[s] == i) {
        b[s] = b.back();
        b.pop_back();
        break;
      }
    }
  }

  double h_;
  std::vector<MarkedPoint<Dim>> points_;
  std::vector<std::uint64_t> keys_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

/// Neighbour source over the sampler state, optionally skipping one point.
template <std::size_t Dim>
struct GridNeighbors {
  const DynamicGrid<Dim>* grid;
  std::size_t exclude = SpatialIndex<Dim>::npos;

  template <class F>
  void for_each_within(const Vec<Dim>& x, double radius, F&& f) const {
    grid->for_each_within(x, radius, f, exclude);
  }
};

}  // namespace gibbsgof
