#pragma once

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "gibbsgof/errors.hpp"

namespace gibbsgof {

/// Upper tail P(χ²(df) > x).
inline double chi2_sf(double x, int df) {
  if (df <= 0) fail(ErrorKind::InvalidParameter, "chi-squared degrees of freedom must be positive");
  if (std::isnan(x)) fail(ErrorKind::Numeric, "chi-squared statistic is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

inline double chi2_cdf(double x, int df) {
  if (df <= 0) fail(ErrorKind::InvalidParameter, "chi-squared degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

/// Quantile of order p of χ²(df).
inline double chi2_quantile(double p, int df) {
  if (df <= 0) fail(ErrorKind::InvalidParameter, "chi-squared degrees of freedom must be positive");
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::InvalidParameter, "quantile order must lie in [0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

/// Asymptotic Kolmogorov tail P(K > t).
inline double kolmogorov_sf(double t) {
  if (t <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (t < 1.18) {
    // Theta-function form, accurate for small arguments.
    const double c = std::sqrt(2.0 * pi) / t;
    double s = 0.0;
    for (int k = 1; k <= 8; ++k) {
      const double m = 2.0 * k - 1.0;
      s += std::exp(-m * m * pi * pi / (8.0 * t * t));
    }
    return std::clamp(1.0 - c * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample Kolmogorov-Smirnov test of `sample` against `cdf`, with the
/// Stephens finite-sample adjustment of the asymptotic p-value.
inline KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) fail(ErrorKind::InvalidParameter, "KS test needs a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d), sample.size()};
}

inline KsResult ks_test_chi2(std::vector<double> sample, int df) {
  return ks_test(std::move(sample), [df](double x) { return chi2_cdf(x, df); });
}

}  // namespace gibbsgof
