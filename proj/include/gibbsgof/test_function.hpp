#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"

namespace gibbsgof {

enum class TestKind { Raw, Inverse, Pearson, EmptySpace, LinearStat, Custom };

/// Test function h(x, φ; θ) selecting a residual flavour.
template <std::size_t Dim>
struct TestFunction {
  using CustomFn =
      std::function<double(const MarkedPoint<Dim>&, const Configuration<Dim>&, const Eigen::VectorXd&)>;

  TestKind kind = TestKind::Raw;
  double radius = 0.0;    // EmptySpace
  Eigen::VectorXd omega;  // LinearStat
  CustomFn custom;        // Custom
  std::string label;

  static TestFunction of(TestKind k) {
    TestFunction h;
    h.kind = k;
    return h;
  }
  static TestFunction raw() { return of(TestKind::Raw); }
  static TestFunction inverse() { return of(TestKind::Inverse); }
  static TestFunction pearson() { return of(TestKind::Pearson); }

  static TestFunction empty_space(double r) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      fail(ErrorKind::InvalidParameter, "empty-space radius must be positive and finite");
    }
    TestFunction h = of(TestKind::EmptySpace);
    h.radius = r;
    return h;
  }

  static TestFunction linear(Eigen::VectorXd w) {
    if (w.size() == 0 || w.cwiseAbs().maxCoeff() == 0.0) {
      fail(ErrorKind::InvalidParameter, "linear-statistic weights must be nonzero");
    }
    TestFunction h = of(TestKind::LinearStat);
    h.omega = std::move(w);
    return h;
  }

  static TestFunction make_custom(CustomFn fn, std::string name = "custom") {
    TestFunction h = of(TestKind::Custom);
    h.custom = std::move(fn);
    h.label = std::move(name);
    return h;
  }

  std::string name() const {
    switch (kind) {
      case TestKind::Raw: return "raw";
      case TestKind::Inverse: return "inverse";
      case TestKind::Pearson: return "pearson";
      case TestKind::EmptySpace: {
        std::ostringstream os;
        os << "empty:" << radius;
        return os.str();
      }
      case TestKind::LinearStat: return "linear";
      case TestKind::Custom: return label;
    }
    return "unknown";
  }
};

/// Energies beyond ±700 are clamped before exponentiation; the count is kept
/// so callers can report it.
struct EnergyClamp {
  static constexpr double limit = 700.0;
  long long count = 0;

  double operator()(double v) {
    if (v > limit) {
      ++count;
      return limit;
    }
    if (v < -limit) {
      ++count;
      return -limit;
    }
    return v;
  }
};

namespace detail {

template <class Stats>
double linear_value(const Eigen::VectorXd& omega, const Stats& v) {
  if (omega.size() != v.size()) {
    fail(ErrorKind::InvalidParameter, "linear-statistic weights have length " + std::to_string(omega.size()) +
                                          ", model has " + std::to_string(v.size()) + " statistics");
  }
  return omega.dot(v.template cast<double>());
}

}  // namespace detail

/// h·e^{-V} at a quadrature node. `forbidden` nodes (V = +∞) contribute 0.
/// `custom_h` is only invoked for Custom test functions.
template <std::size_t Dim, class Stats, class CustomEval>
double weighted_integrand(const TestFunction<Dim>& h, double energy, bool forbidden, const Stats& v,
                          double nearest, EnergyClamp& clamp, CustomEval&& custom_h) {
  if (forbidden) return 0.0;
  switch (h.kind) {
    case TestKind::Raw: return std::exp(-clamp(energy));
    case TestKind::Inverse: return 1.0;
    case TestKind::Pearson: return std::exp(-0.5 * clamp(energy));
    case TestKind::EmptySpace: return nearest <= h.radius ? 1.0 : 0.0;
    case TestKind::LinearStat: return detail::linear_value(h.omega, v) * std::exp(-clamp(energy));
    case TestKind::Custom: return custom_h() * std::exp(-clamp(energy));
  }
  return 0.0;
}

/// h(x, φ\x) at a data point.
template <std::size_t Dim, class Stats, class CustomEval>
double point_value(const TestFunction<Dim>& h, double energy, const Stats& v, double nearest,
                   EnergyClamp& clamp, CustomEval&& custom_h) {
  const bool infinite = energy == std::numeric_limits<double>::infinity();
  switch (h.kind) {
    case TestKind::Raw: return 1.0;
    case TestKind::Inverse:
      if (infinite) fail(ErrorKind::Numeric, "inverse test function is infinite at a forbidden data point");
      return std::exp(clamp(energy));
    case TestKind::Pearson:
      if (infinite) fail(ErrorKind::Numeric, "Pearson test function is infinite at a forbidden data point");
      return std::exp(0.5 * clamp(energy));
    case TestKind::EmptySpace:
      if (nearest > h.radius) return 0.0;
      if (infinite) fail(ErrorKind::Numeric, "empty-space test function is infinite at a forbidden data point");
      return std::exp(clamp(energy));
    case TestKind::LinearStat: return detail::linear_value(h.omega, v);
    case TestKind::Custom: return custom_h();
  }
  return 0.0;
}

}  // namespace gibbsgof
