#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gibbsgof/geometry.hpp"

namespace gibbsgof {

/// Area of the lens B(a,R) ∩ B(b,R) for two discs whose centres are `d` apart.
inline double lens_area(double radius, double d) {
  if (d >= 2.0 * radius) return 0.0;
  if (d <= 0.0) return std::numbers::pi * radius * radius;
  return 2.0 * radius * radius * std::acos(d / (2.0 * radius)) -
         0.5 * d * std::sqrt(4.0 * radius * radius - d * d);
}

namespace detail {

struct ArcInterval {
  double start;  // radians, in [0, 2π)
  double length; // in (0, 2π]
};

// Angular interval of circle (c, R) lying strictly inside the disc B(o, R).
inline std::optional<ArcInterval> covered_arc(const Vec<2>& c, const Vec<2>& o, double radius) {
  const double dx = o[0] - c[0];
  const double dy = o[1] - c[1];
  const double d = std::hypot(dx, dy);
  if (d >= 2.0 * radius) return std::nullopt;
  if (d == 0.0) return ArcInterval{0.0, 2.0 * std::numbers::pi};
  const double half = std::acos(d / (2.0 * radius));
  double start = std::atan2(dy, dx) - half;
  start = std::fmod(start, 2.0 * std::numbers::pi);
  if (start < 0.0) start += 2.0 * std::numbers::pi;
  return ArcInterval{start, 2.0 * half};
}

// Complement on [0, 2π) of a union of arcs, as (start, end) pairs with end > start.
inline std::vector<std::pair<double, double>> uncovered(std::vector<ArcInterval> covers) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::pair<double, double>> pieces;
  for (const auto& a : covers) {
    if (a.length >= two_pi) return {};
    const double end = a.start + a.length;
    if (end <= two_pi) {
      pieces.emplace_back(a.start, end);
    } else {
      pieces.emplace_back(a.start, two_pi);
      pieces.emplace_back(0.0, end - two_pi);
    }
  }
  std::sort(pieces.begin(), pieces.end());
  std::vector<std::pair<double, double>> gaps;
  double cursor = 0.0;
  for (const auto& [s, e] : pieces) {
    if (s > cursor) gaps.emplace_back(cursor, s);
    cursor = std::max(cursor, e);
  }
  if (cursor < two_pi) gaps.emplace_back(cursor, two_pi);
  return gaps;
}

// ½∮(x dy − y dx) along the counter-clockwise arc [a, b] of circle (c, R).
inline double arc_contribution(const Vec<2>& c, double radius, double a, double b) {
  return 0.5 * (radius * radius * (b - a) +
                radius * (c[0] * (std::sin(b) - std::sin(a)) - c[1] * (std::cos(b) - std::cos(a))));
}

}  // namespace detail

/// Area of B(x, R) not covered by the discs B(y, R), y in `neighbours`.
/// Computed exactly by integrating along the boundary arcs of the set
/// difference (Green's theorem), so the cost is polynomial in the number of
/// overlapping neighbours rather than in a grid resolution.
inline double added_disc_area(double radius, const Vec<2>& x, std::span<const Vec<2>> neighbours) {
  const double full = std::numbers::pi * radius * radius;
  // Work relative to x so the boundary terms do not cancel catastrophically.
  const Vec<2> origin{0.0, 0.0};
  std::vector<Vec<2>> discs;
  for (const auto& y : neighbours) {
    const Vec<2> rel{y[0] - x[0], y[1] - x[1]};
    const double d = std::hypot(rel[0], rel[1]);
    if (d == 0.0) return 0.0;
    if (d >= 2.0 * radius) continue;
    if (std::find(discs.begin(), discs.end(), rel) == discs.end()) discs.push_back(rel);
  }
  if (discs.empty()) return full;
  if (discs.size() == 1) return full - lens_area(radius, distance<2>(origin, discs[0]));

  double area = 0.0;
  // Outer boundary: parts of the circle around x outside every neighbour disc.
  {
    std::vector<detail::ArcInterval> covers;
    for (const auto& y : discs) {
      if (auto arc = detail::covered_arc(origin, y, radius)) covers.push_back(*arc);
    }
    for (const auto& [a, b] : detail::uncovered(std::move(covers))) {
      area += detail::arc_contribution(origin, radius, a, b);
    }
  }
  // Inner boundary: parts of neighbour circles inside B(x, R) and outside the
  // other neighbour discs, traversed clockwise.
  for (std::size_t i = 0; i < discs.size(); ++i) {
    const auto inside_x = detail::covered_arc(discs[i], origin, radius);
    if (!inside_x) continue;
    std::vector<detail::ArcInterval> covers;
    // The part of circle i outside B(x, R) is the complementary arc.
    if (inside_x->length < 2.0 * std::numbers::pi) {
      double s = inside_x->start + inside_x->length;
      if (s >= 2.0 * std::numbers::pi) s -= 2.0 * std::numbers::pi;
      covers.push_back({s, 2.0 * std::numbers::pi - inside_x->length});
    }
    for (std::size_t j = 0; j < discs.size(); ++j) {
      if (j == i) continue;
      if (auto arc = detail::covered_arc(discs[i], discs[j], radius)) covers.push_back(*arc);
    }
    for (const auto& [a, b] : detail::uncovered(std::move(covers))) {
      area -= detail::arc_contribution(discs[i], radius, a, b);
    }
  }
  return std::clamp(area, 0.0, full);
}

}  // namespace gibbsgof
