#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gibbsgof/gof.hpp"

using namespace gibbsgof;

namespace {

using Theta5 = ParameterVector<5>;
using Strauss = TwoTypeStrauss<2>;

ObservedPattern<2> uniform_pattern(std::size_t n, const ObservationDomain<2>& dom, std::uint64_t seed, int marks = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  const Box<2> ext = dom.extended();
  std::vector<MarkedPoint<2>> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({{ext.lower[0] + ext.side * u(rng), ext.lower[1] + ext.side * u(rng)}, static_cast<Mark>(i % marks)});
  }
  return {Configuration<2>(pts), dom};
}

// χ²(df) density integrated on [0, x] by composite Simpson in u = √t, which
// removes the t^{-1/2} singularity at 0 for df = 1.
double chi2_cdf_simpson(double x, int df) {
  const double k = 0.5 * df;
  const double norm = std::exp(-std::lgamma(k) - k * std::log(2.0));
  auto f = [&](double u) {
    const double t = u * u;
    return 2.0 * u * norm * std::pow(t, k - 1.0) * std::exp(-0.5 * t);
  };
  const int n = 20000;
  const double b = std::sqrt(x), h = b / n;
  double s = (df == 1 ? 2.0 * norm : f(0.0)) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

template <int P>
void check_report_invariants(const GofReport<P>& rep) {
  EXPECT_GE(rep.statistic, 0.0);
  EXPECT_DOUBLE_EQ(rep.p_value, chi2_sf(rep.statistic, rep.df));
  EXPECT_EQ(rep.reject, rep.statistic > chi2_quantile(1.0 - rep.alpha, rep.df));
}

const Theta5 kTheta = (Theta5() << -std::log(150.0), -std::log(150.0), 0.5, 0.3, 0.4).finished();

std::vector<Configuration<2>> strauss_runs(const ObservationDomain<2>& dom, std::size_t n, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.seed = seed;
  cfg.sweeps = 3000;
  return sample_batch(Strauss(0.05, 0.05, 0.05), kTheta, dom, n, cfg);
}

}  // namespace

TEST(Chi2, TailExamples) {
  for (int df : {1, 3, 7}) EXPECT_EQ(chi2_sf(0.0, df), 1.0);
  EXPECT_NEAR(chi2_sf(3.8415, 1), 0.05, 1e-4);
  EXPECT_NEAR(chi2_sf(7.8147, 3), 0.05, 1e-4);
  double prev = 1.0;
  for (double x = 0.5; x < 200.0; x *= 1.5) {
    const double s = chi2_sf(x, 4);
    EXPECT_LT(s, prev);
    prev = s;
  }
  EXPECT_LT(chi2_sf(1e4, 4), 1e-300);
  EXPECT_EQ(chi2_sf(std::numeric_limits<double>::infinity(), 2), 0.0);
  EXPECT_THROW(chi2_sf(1.0, 0), Error);
}

TEST(Chi2, AgreesWithNumericalIntegration) {
  for (int df : {1, 2, 3, 4, 9}) {
    for (double x : {0.3, 1.0, 3.8415, 8.0, 15.0}) {
      EXPECT_NEAR(chi2_cdf(x, df), chi2_cdf_simpson(x, df), 1e-10) << df << " " << x;
      EXPECT_NEAR(chi2_sf(x, df) + chi2_cdf(x, df), 1.0, 1e-14);
    }
  }
}

TEST(Chi2, QuantileInvertsCdf) {
  for (int df : {1, 3, 4}) {
    for (double p : {0.01, 0.5, 0.95, 0.999}) EXPECT_NEAR(chi2_cdf(chi2_quantile(p, df), df), p, 1e-12);
  }
  EXPECT_NEAR(chi2_quantile(0.95, 1), 3.841458820694124, 1e-9);
}

TEST(Kolmogorov, KnownValuesAndContinuity) {
  EXPECT_EQ(kolmogorov_sf(0.0), 1.0);
  EXPECT_NEAR(kolmogorov_sf(1.3581), 0.05, 2e-4);
  EXPECT_NEAR(kolmogorov_sf(1.6276), 0.01, 2e-4);
  EXPECT_NEAR(kolmogorov_sf(0.8276), 0.5, 5e-4);
  EXPECT_NEAR(kolmogorov_sf(1.18 - 1e-9), kolmogorov_sf(1.18 + 1e-9), 1e-8);
}

TEST(KsTest, AcceptsMatchingAndRejectsShiftedSamples) {
  std::mt19937_64 rng(1);
  std::chi_squared_distribution<double> c3(3.0);
  std::vector<double> good, bad;
  for (int i = 0; i < 500; ++i) {
    const double x = c3(rng);
    good.push_back(x);
    bad.push_back(1.3 * x);
  }
  EXPECT_GT(ks_test_chi2(good, 3).p_value, 0.01);
  EXPECT_LT(ks_test_chi2(bad, 3).p_value, 1e-4);
  const auto single = ks_test_chi2({2.0}, 3);
  EXPECT_EQ(single.n, 1u);
  EXPECT_NEAR(single.statistic, std::max(chi2_cdf(2.0, 3), 1.0 - chi2_cdf(2.0, 3)), 1e-15);
}

TEST(TestT1, PoissonMatchesQuadratDispersion) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 2.0}, 0.0);
  const PoissonModel<2> m;
  for (std::uint64_t seed : {1, 2, 3}) {
    const ObservedPattern<2> pat{sample_poisson(dom.window(), 100.0, m.marks(), seed), dom};
    GofSpec<2> spec;
    spec.delta = 0.02;
    spec.d_vee = 0.0;
    spec.quad = {50};
    const auto rep = test_T1(pat, m, TestFunction<2>::raw(), 4, spec);
    check_report_invariants(rep);
    EXPECT_EQ(rep.df, 3);
    double counts[4] = {0, 0, 0, 0};
    for (const auto& p : pat.points) counts[(p.position[0] >= 1.0 ? 1 : 0) + (p.position[1] >= 1.0 ? 2 : 0)] += 1.0;
    const double mean = (counts[0] + counts[1] + counts[2] + counts[3]) / 4.0;
    double dispersion = 0.0;
    for (double c : counts) dispersion += (c - mean) * (c - mean) / mean;
    EXPECT_NEAR(rep.statistic, dispersion, 0.05 * dispersion) << seed;
  }
}

TEST(TestT1, EqualSubdomainResidualsGiveZero) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 2.0}, 0.0);
  std::vector<MarkedPoint<2>> pts;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) pts.push_back({{0.05 + 0.1 * i, 0.05 + 0.1 * j}, 0});
  const ObservedPattern<2> pat{Configuration<2>(pts), dom};
  GofSpec<2> spec;
  spec.delta = 0.25;
  spec.quad = {16};
  const auto rep = test_T1(pat, PoissonModel<2>(), TestFunction<2>::raw(), 4, spec);
  EXPECT_GT(rep.covariance.lambda_inn, 0.0);
  EXPECT_NEAR(rep.statistic, 0.0, 1e-20);
  EXPECT_NEAR(rep.p_value, 1.0, 1e-12);
  EXPECT_FALSE(rep.reject);
}

TEST(TestT1, InvariantUnderSubdomainRelabelling) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  const auto runs = strauss_runs(dom, 1, 3);
  const Strauss m(0.05, 0.05, 0.05);
  // Reflection x ↦ 1 - x permutes the subdomains and maps the cell grid and
  // quadrature nodes onto themselves.
  std::vector<MarkedPoint<2>> mirrored;
  for (const auto& p : runs[0]) mirrored.push_back({{1.0 - p.position[0], p.position[1]}, p.mark});
  const ObservedPattern<2> a{runs[0], dom}, b{Configuration<2>(mirrored), dom};
  GofSpec<2> spec;
  spec.quad = {40};
  const auto ra = test_T1(a, m, TestFunction<2>::pearson(), 4, spec);
  const auto rb = test_T1(b, m, TestFunction<2>::pearson(), 4, spec);
  EXPECT_NEAR(ra.statistic, rb.statistic, 1e-6 * ra.statistic);
  // Subdomains are numbered with the first coordinate varying slowest.
  EXPECT_NEAR(ra.residuals[0], rb.residuals[2], 1e-6);
  EXPECT_NEAR(ra.residuals[1], rb.residuals[3], 1e-6);
}

TEST(TestT1, RejectsBadArguments) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.0);
  const auto pat = uniform_pattern(50, dom, 4);
  GofSpec<2> spec;
  spec.delta = 0.25;
  EXPECT_THROW(test_T1(pat, PoissonModel<2>(), TestFunction<2>::raw(), 1, spec), Error);
  spec.alpha = 1.5;
  EXPECT_THROW(test_T1(pat, PoissonModel<2>(), TestFunction<2>::raw(), 4, spec), Error);
  spec.alpha = 0.05;
  spec.delta = 0.0;  // range 0 needs an explicit delta
  EXPECT_THROW(test_T1(pat, PoissonModel<2>(), TestFunction<2>::raw(), 4, spec), Error);
}

TEST(TestT1, EmptyPatternIsFitFailure) {
  const ObservedPattern<2> empty{{}, ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.0)};
  GofSpec<2> spec;
  spec.delta = 0.25;
  try {
    test_T1(empty, PoissonModel<2>(), TestFunction<2>::raw(), 4, spec);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FitFailure);
  }
}

TEST(TestT1Tilde, RefusesStatisticLinearTestFunctions) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  const auto pat = uniform_pattern(80, dom, 5, 2);
  GofSpec<2> spec;
  spec.delta = 0.25;
  for (const auto& call : {std::function<void()>([&] {
                             test_T1_tilde(pat, PoissonModel<2>(MarkSet::uniform({"1", "2"})),
                                           TestFunction<2>::raw(), 4, spec);
                           }),
                           std::function<void()>([&] {
                             test_T1_tilde(pat, Strauss(0.05, 0.05, 0.05), TestFunction<2>::raw(), 4, spec);
                           }),
                           std::function<void()>([&] {
                             Eigen::VectorXd w(5);
                             w << 0, 0, 1, 0, 0;
                             test_T1_tilde(pat, Strauss(0.05, 0.05, 0.05), TestFunction<2>::linear(w), 4, spec);
                           })}) {
    try {
      call();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::DegenerateNormalization);
      EXPECT_NE(std::string(e.what()).find("lambda_Res = 0"), std::string::npos) << e.what();
    }
  }
}

TEST(TestT1Tilde, ConstantTestFunctionOnPoissonIsDegenerate) {
  // Pearson residuals of a Poisson model are a constant multiple of the raw
  // ones, so lambda_Res vanishes up to rounding.
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.0);
  const ObservedPattern<2> pat{sample_poisson(dom.window(), 200.0, MarkSet(), 6), dom};
  GofSpec<2> spec;
  spec.delta = 0.1;
  spec.d_vee = 0.1;
  try {
    test_T1_tilde(pat, PoissonModel<2>(), TestFunction<2>::pearson(), 4, spec);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateNormalization);
  }
}

TEST(TestT1Tilde, StatisticMatchesNormalizedResiduals) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  const auto runs = strauss_runs(dom, 3, 10);
  const Strauss m(0.05, 0.05, 0.05);
  GofSpec<2> spec;
  spec.quad = {40};
  for (const auto& phi : runs) {
    const auto rep = test_T1_tilde(ObservedPattern<2>{phi, dom}, m, TestFunction<2>::inverse(), 4, spec);
    check_report_invariants(rep);
    EXPECT_EQ(rep.df, 4);
    ASSERT_TRUE(rep.covariance.lambda_res.has_value());
    const Eigen::MatrixXd B = sigma1_inv_sqrt(rep.covariance.lambda_inn, *rep.covariance.lambda_res, 4);
    EXPECT_NEAR(rep.statistic, (B * rep.residuals).squaredNorm() / 0.25, 1e-9 * rep.statistic);
    EXPECT_NEAR(rep.residuals.sum(), rep.cell_residuals.sum(), 1e-9);
  }
}

TEST(TestT2Tilde, SingleFunctionReducesToScalar) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  const auto runs = strauss_runs(dom, 1, 20);
  const Strauss m(0.05, 0.05, 0.05);
  GofSpec<2> spec;
  spec.quad = {40};
  const auto rep = test_T2_tilde(ObservedPattern<2>{runs[0], dom}, m, {TestFunction<2>::empty_space(0.03)}, spec);
  check_report_invariants(rep);
  EXPECT_EQ(rep.df, 1);
  ASSERT_TRUE(rep.covariance.sigma2.has_value());
  const double lres = (*rep.covariance.sigma2)(0, 0);
  EXPECT_NEAR(rep.statistic, rep.residuals[0] * rep.residuals[0] / lres, 1e-9 * rep.statistic);
}

TEST(TestT2Tilde, DuplicatesAreRefusedAndWarnings) {
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  const auto runs = strauss_runs(dom, 1, 21);
  const Strauss m(0.05, 0.05, 0.05);
  const ObservedPattern<2> pat{runs[0], dom};
  GofSpec<2> spec;
  spec.quad = {40};
  const auto h = TestFunction<2>::empty_space(0.03);
  try {
    test_T2_tilde(pat, m, {h, h}, spec);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateNormalization);
  }
  const auto rep = test_T2_tilde(pat, m, {TestFunction<2>::empty_space(0.03), TestFunction<2>::empty_space(0.045)}, spec);
  EXPECT_EQ(rep.df, 2);
  EXPECT_TRUE(rep.warnings.empty());
  // Radius beyond the range is allowed but flagged.
  spec.delta = 0.1;
  spec.d_vee = 0.1;
  const ObservationDomain<2> wide = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  const auto rep2 = test_T2_tilde(ObservedPattern<2>{runs[0], wide}, m, {TestFunction<2>::empty_space(0.04), TestFunction<2>::empty_space(0.08)}, spec);
  EXPECT_EQ(rep2.warnings.size(), 1u);
}

TEST(CalibrateNull, SingletonAndDeterminism) {
  const PoissonModel<2> m;
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.0);
  GofSpec<2> spec;
  spec.delta = 0.1;
  spec.d_vee = 0.1;
  spec.quad = {20};
  auto sim = [&](std::uint64_t s) { return sample_poisson(dom.window(), 100.0, m.marks(), s); };
  const auto one = calibrate_null(m, dom, spec, 1, 7, sim);
  EXPECT_EQ(one.statistics.size(), 1u);
  EXPECT_EQ(one.ks.n, 1u);
  EXPECT_TRUE(std::isfinite(one.ks.p_value));
  const auto a = calibrate_null(m, dom, spec, 30, 7, sim, 1);
  const auto b = calibrate_null(m, dom, spec, 30, 7, sim, 3);
  EXPECT_EQ(a.statistics, b.statistics);
  EXPECT_NE(std::find(a.statistics.begin(), a.statistics.end(), one.statistics.front()), a.statistics.end());
  EXPECT_EQ(a.df, 3);
  EXPECT_TRUE(a.failure.empty());
  EXPECT_TRUE(std::is_sorted(a.statistics.begin(), a.statistics.end()));
  EXPECT_THROW(calibrate_null(m, dom, spec, 0, 7, sim), Error);
}

TEST(CalibrateNull, PoissonT1NullLaw) {
  const PoissonModel<2> m;
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 2.0}, 0.0);
  GofSpec<2> spec;
  spec.delta = 0.1;
  spec.d_vee = 0.1;
  spec.quad = {20};
  const auto cal = calibrate_null(
      m, dom, spec, 200, 1000, [&](std::uint64_t s) { return sample_poisson(dom.window(), 100.0, m.marks(), s); });
  EXPECT_EQ(cal.degenerate, 0u);
  EXPECT_GT(cal.ks.p_value, 0.01) << "D = " << cal.ks.statistic;
  EXPECT_NEAR(cal.rejection_rate, 0.05, 0.04);
}

TEST(CalibrateNull, ReportsDegenerateReplicates) {
  const PoissonModel<2> m;
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.0);
  GofSpec<2> spec;
  spec.test = TestName::T1Tilde;
  spec.hs = {TestFunction<2>::pearson()};
  spec.delta = 0.1;
  spec.d_vee = 0.1;
  spec.quad = {20};
  const auto cal = calibrate_null(
      m, dom, spec, 10, 1, [&](std::uint64_t s) { return sample_poisson(dom.window(), 100.0, m.marks(), s); });
  EXPECT_EQ(cal.degenerate, 10u);
  EXPECT_TRUE(cal.statistics.empty());
  EXPECT_FALSE(cal.failure.empty());
}

TEST(CalibrateNull, GibbsOverloadMatchesSampler) {
  const Strauss m(0.05, 0.05, 0.05);
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  GofSpec<2> spec;
  spec.test = TestName::T1Tilde;
  spec.hs = {TestFunction<2>::inverse()};
  spec.quad = {40};
  SamplerConfig cfg;
  cfg.seed = 10;
  cfg.sweeps = 3000;
  const auto cal = calibrate_null(m, kTheta, dom, spec, 3, cfg);
  const auto runs = strauss_runs(dom, 3, 10);
  std::vector<double> direct;
  for (const auto& phi : runs) direct.push_back(test_T1_tilde(ObservedPattern<2>{phi, dom}, m, TestFunction<2>::inverse(), 4, spec).statistic);
  std::sort(direct.begin(), direct.end());
  EXPECT_EQ(cal.statistics, direct);
}
