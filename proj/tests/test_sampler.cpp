#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "gibbsgof/sampler.hpp"

using namespace gibbsgof;

namespace {

using Theta5 = ParameterVector<5>;

Theta5 strauss_theta(double t1, double t2) { return (Theta5() << t1, t1, t2, t2, t2).finished(); }

double mean_count(const std::vector<Configuration<2>>& runs) {
  double s = 0.0;
  for (const auto& c : runs) s += static_cast<double>(c.size());
  return s / static_cast<double>(runs.size());
}

}  // namespace

TEST(SamplePoisson, ZeroVolumeWindowIsEmpty) {
  EXPECT_TRUE(sample_poisson(Box<2>{{0, 0}, 0.0}, 5.0, MarkSet(), 1).empty());
}

TEST(SamplePoisson, RejectsNonPositiveIntensity) {
  EXPECT_THROW(sample_poisson(Box<2>{{0, 0}, 1.0}, 0.0, MarkSet(), 1), Error);
}

TEST(SamplePoisson, MeanCount) {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) total += sample_poisson(Box<2>{{0, 0}, 1.0}, 100.0, MarkSet(), s).size();
  EXPECT_NEAR(total / 1000.0, 100.0, 3.0);
}

TEST(SamplePoisson, MarkFractionAndPositions) {
  const auto marks = MarkSet::uniform({"1", "2"});
  const Box<2> window{{-1, 2}, 1.0};
  double first = 0.0, all = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    for (const auto& p : sample_poisson(window, 50.0, marks, s)) {
      EXPECT_TRUE(window.contains(p.position));
      first += p.mark == 0 ? 1.0 : 0.0;
      all += 1.0;
    }
  }
  EXPECT_NEAR(first / all, 0.5, 0.02);
}

TEST(SamplerRatios, DetailedBalance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 100; ++i) {
    const double v = u(rng);
    const auto n = static_cast<std::size_t>(i % 37);
    const double zv = 1.0 + 10.0 * std::abs(u(rng));
    const double pb = 0.2 + 0.06 * std::abs(u(rng));
    EXPECT_NEAR(birth_ratio(v, n, zv, pb) * death_ratio(v, n, zv, pb), 1.0, 1e-12);
  }
  EXPECT_EQ(birth_ratio(std::numeric_limits<double>::infinity(), 3, 1.0, 0.5), 0.0);
}

TEST(SampleGibbs, NoProposalsGivesEmpty) {
  const TwoTypeStrauss<2> m(0.05, 0.05, 0.05);
  SamplerConfig cfg;
  cfg.sweeps = 0;
  EXPECT_TRUE(sample_gibbs(m, strauss_theta(-3, 0), Box<2>{{0, 0}, 1.0}, cfg).empty());
  cfg.sweeps = 10;
  EXPECT_TRUE(sample_gibbs(m, strauss_theta(-3, 0), Box<2>{{0, 0}, 0.0}, cfg).empty());
}

TEST(SampleGibbs, RejectsInadmissibleTheta) {
  const TwoTypeStrauss<2> m(0.05, 0.05, 0.05);
  try {
    sample_gibbs(m, strauss_theta(0, -1), Box<2>{{0, 0}, 1.0}, SamplerConfig{});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidParameter);
  }
}

TEST(SampleGibbs, ZeroInteractionMatchesPoisson) {
  const double z = 50.0;
  const TwoTypeStrauss<2> m(0.05, 0.05, 0.05);
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.0);
  SamplerConfig cfg;
  cfg.seed = 100;
  cfg.sweeps = 4000;
  const auto runs = sample_batch(m, strauss_theta(-std::log(z), 0.0), dom, 200, cfg, 1);
  double first = 0.0, all = 0.0;
  for (const auto& c : runs) {
    for (const auto& p : c) {
      first += p.mark == 0 ? 1.0 : 0.0;
      all += 1.0;
    }
  }
  EXPECT_NEAR(mean_count(runs), z, 3.0 * std::sqrt(z / 200.0));
  EXPECT_NEAR(first / all, 0.5, 3.0 * std::sqrt(0.25 / all));
}

TEST(SampleGibbs, ExactCountLawOnSmallWindow) {
  // Every pair in a window of side 0.05 lies within 0.1, so the pair count is
  // n(n-1)/2 and P(n) ∝ |W|^n / n! · exp(-θ₁ n - θ₂ n(n-1)/2).
  const double side = 0.05, vol = side * side, t1 = -std::log(4.0 / vol), t2 = 0.4;
  std::vector<double> w;
  for (int n = 0; n < 60; ++n) {
    w.push_back(std::exp(n * std::log(vol) - std::lgamma(n + 1.0) - t1 * n - t2 * n * (n - 1) / 2.0));
  }
  const double zsum = std::accumulate(w.begin(), w.end(), 0.0);
  double mean = 0.0, second = 0.0;
  for (int n = 0; n < 60; ++n) {
    mean += n * w[n] / zsum;
    second += n * n * w[n] / zsum;
  }
  const double sd = std::sqrt(second - mean * mean);

  const TwoTypeStrauss<2> m(0.1, 0.1, 0.1);
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, side}, 0.0);
  SamplerConfig cfg;
  cfg.seed = 7;
  cfg.sweeps = 2000;
  const std::size_t reps = 400;
  const auto runs = sample_batch(m, strauss_theta(t1, t2), dom, reps, cfg, 1);
  EXPECT_NEAR(mean_count(runs), mean, 4.0 * sd / std::sqrt(static_cast<double>(reps)));
}

TEST(SampleGibbs, StrongInhibitionSeparatesMarkOnePairs) {
  const double r = 0.05;
  const TwoTypeStrauss<2> m(r, 0.0, 0.0);
  Theta5 theta;
  theta << -std::log(200.0), -std::log(200.0), 10.0, 0.0, 0.0;
  SamplerConfig cfg;
  cfg.seed = 5;
  cfg.sweeps = 100;
  cfg.reference_intensity = 200.0;
  double close = 0.0, pairs = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    cfg.seed = s;
    const auto phi = sample_gibbs(m, theta, Box<2>{{0, 0}, 1.0}, cfg);
    for (std::size_t i = 0; i < phi.size(); ++i) {
      for (std::size_t j = i + 1; j < phi.size(); ++j) {
        if (phi[i].mark != 0 || phi[j].mark != 0) continue;
        pairs += 1.0;
        close += distance<2>(phi[i].position, phi[j].position) <= r ? 1.0 : 0.0;
      }
    }
  }
  ASSERT_GT(pairs, 1000.0);
  EXPECT_LE(close / pairs, 0.01);
}

TEST(SampleGibbs, StaysInsideExtendedWindowWithMoves) {
  const AreaInteraction m(0.05);
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0.3, -0.2}, 1.0}, 0.1);
  SamplerConfig cfg;
  cfg.seed = 11;
  cfg.sweeps = 20;
  cfg.moves = true;
  cfg.reference_intensity = 100.0;
  const auto phi = sample_gibbs(m, ParameterVector<2>(0.0, 50.0), dom, cfg);
  ASSERT_FALSE(phi.empty());
  for (const auto& p : phi) EXPECT_TRUE(dom.extended().contains(p.position));
}

TEST(SampleGibbs, HardCoreIsRespected) {
  const double hc = 0.03;
  const TwoTypeStrauss<2> m(0.05, 0.05, 0.05, hc);
  SamplerConfig cfg;
  cfg.seed = 13;
  cfg.sweeps = 50;
  cfg.moves = true;
  cfg.reference_intensity = 300.0;
  const auto phi = sample_gibbs(m, strauss_theta(-std::log(300.0), -0.2), Box<2>{{0, 0}, 1.0}, cfg);
  ASSERT_GT(phi.size(), 50u);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    for (std::size_t j = i + 1; j < phi.size(); ++j) {
      EXPECT_GE(distance<2>(phi[i].position, phi[j].position), hc);
    }
  }
}

TEST(SampleBatch, SingleReplicateMatchesSampleGibbs) {
  const TwoTypeStrauss<2> m(0.05, 0.05, 0.05);
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  SamplerConfig cfg;
  cfg.seed = 42;
  cfg.sweeps = 200;
  cfg.reference_intensity = 50.0;
  const auto theta = strauss_theta(0.0, 0.3);
  const auto batch = sample_batch(m, theta, dom, 1, cfg);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0], sample_gibbs(m, theta, dom, cfg));
}

TEST(SampleBatch, DeterministicAndThreadIndependent) {
  const TwoTypeStrauss<2> m(0.05, 0.05, 0.05);
  const auto dom = ObservationDomain<2>::from_window(Box<2>{{0, 0}, 1.0}, 0.05);
  SamplerConfig cfg;
  cfg.seed = 9;
  cfg.sweeps = 100;
  cfg.reference_intensity = 50.0;
  const auto theta = strauss_theta(0.0, 0.3);
  const auto a = sample_batch(m, theta, dom, 20, cfg, 1);
  const auto b = sample_batch(m, theta, dom, 20, cfg, 4);
  EXPECT_EQ(a, b);
  std::set<std::size_t> counts;
  for (const auto& c : a) counts.insert(c.size());
  EXPECT_GT(counts.size(), 1u);
  EXPECT_THROW(sample_batch(m, theta, dom, 0, cfg), Error);
}
