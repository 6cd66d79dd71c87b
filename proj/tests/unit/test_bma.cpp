#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fieldcast/bma.hpp"
#include "fieldcast/random.hpp"
#include "fieldcast/spatial.hpp"
#include "fieldcast/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fieldcast;

namespace {

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

VariogramFit nugget_fit(double theta, double range) {
  VariogramFit f;
  f.theta = theta;
  f.range_km = range;
  return f;
}

}  // namespace

TEST(FitBma, SingleMemberIsOlsResidualVariance) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n;
  std::vector<double> f(20 * 6), e(20 * 6);
  for (auto& x : f) x = 10 + 3 * n(gen);
  for (auto& x : e) x = n(gen);
  const auto data = fixture::build(
      fixture::line_stations(6), 20, 1, [&](std::size_t d, std::size_t s, int) { return f[d * 6 + s]; },
      [&](std::size_t d, std::size_t s) { return 1.0 + 0.8 * f[d * 6 + s] + e[d * 6 + s]; });
  const auto fit = fit_bma(data, fixture::window_over(0, 20, 19));
  ASSERT_EQ(fit.params.members.size(), 1u);
  EXPECT_DOUBLE_EQ(fit.params.members[0].weight, 1.0);
  // Independent OLS.
  double mf = 0, my = 0;
  const std::size_t n_rows = 120;
  for (std::size_t i = 0; i < n_rows; ++i) {
    mf += f[i];
    my += 1.0 + 0.8 * f[i] + e[i];
  }
  mf /= n_rows;
  my /= n_rows;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n_rows; ++i) {
    sxy += (f[i] - mf) * (1.0 + 0.8 * f[i] + e[i] - my);
    sxx += (f[i] - mf) * (f[i] - mf);
  }
  const double b = sxy / sxx, a = my - b * mf;
  double ssr = 0;
  for (std::size_t i = 0; i < n_rows; ++i) ssr += std::pow(1.0 + 0.8 * f[i] + e[i] - a - b * f[i], 2);
  EXPECT_NEAR(fit.params.members[0].a, a, 1e-9);
  EXPECT_NEAR(fit.params.members[0].b, b, 1e-10);
  EXPECT_NEAR(fit.params.sigma2, ssr / n_rows, 1e-9);
}

TEST(FitBma, IdenticalMembersShareWeightEqually) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n;
  std::vector<double> f(20 * 6), y(20 * 6);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = 5 + 2 * n(gen);
    y[i] = f[i] + n(gen);
  }
  const auto data = fixture::build(
      fixture::line_stations(6), 20, 2, [&](std::size_t d, std::size_t s, int) { return f[d * 6 + s]; },
      [&](std::size_t d, std::size_t s) { return y[d * 6 + s]; });
  const auto fit = fit_bma(data, fixture::window_over(0, 20, 19));
  EXPECT_NEAR(fit.params.members[0].weight, 0.5, 1e-6);
  EXPECT_NEAR(fit.params.members[1].weight, 0.5, 1e-6);
}

TEST(FitBma, RecoversMixtureTruth) {
  SynthSpec spec;
  spec.truth = SynthTruth::kBma;
  spec.stations = 100;
  spec.members = 2;
  spec.days = 26;
  spec.seed = 3;
  spec.bma.members = {{0.0, 1.0, 0.7}, {0.0, 1.0, 0.3}};
  spec.bma.sigma2 = 1.0;
  spec.member_sd = 2.0;
  spec.anomaly_sd = 20.0;
  const auto data = generate(spec);
  const auto fit = fit_bma(data, fixture::window_over(0, 25, 25));
  EXPECT_NEAR(fit.params.members[0].weight, 0.7, 0.08);
  EXPECT_NEAR(fit.params.members[1].weight, 0.3, 0.08);
  EXPECT_LE(rel(fit.params.sigma2, 1.0), 0.10) << fit.params.sigma2;
}

TEST(FitBma, LogLikelihoodNonDecreasing) {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    SynthSpec spec;
    spec.truth = SynthTruth::kBma;
    spec.stations = 40;
    spec.members = 5;
    spec.days = 21;
    spec.seed = seed;
    const auto fit = fit_bma(generate(spec), fixture::window_over(0, 20, 20));
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
      EXPECT_GE(fit.log_likelihood[i], fit.log_likelihood[i - 1] - 1e-9);
    }
    double w = 0;
    for (const auto& m : fit.params.members) {
      EXPECT_GE(m.weight, 0.0);
      w += m.weight;
    }
    EXPECT_NEAR(w, 1.0, 1e-10);
    EXPECT_GT(fit.params.sigma2, 0.0);
  }
}

TEST(FitBma, ConstantMemberGetsZeroSlope) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n;
  std::vector<double> f(10 * 5), y(10 * 5);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = n(gen);
    y[i] = f[i] + 0.5 * n(gen);
  }
  const auto data = fixture::build(
      fixture::line_stations(5), 10, 2,
      [&](std::size_t d, std::size_t s, int m) { return m == 0 ? f[d * 5 + s] : 4.0; },
      [&](std::size_t d, std::size_t s) { return y[d * 5 + s]; });
  const auto fit = fit_bma(data, fixture::window_over(0, 10, 9));
  double ybar = 0;
  for (double v : y) ybar += v;
  ybar /= y.size();
  EXPECT_EQ(fit.params.members[1].b, 0.0);
  EXPECT_NEAR(fit.params.members[1].a, ybar, 1e-12);
  EXPECT_FALSE(fit.warnings.empty());
}

TEST(PredictBma, Examples) {
  BmaParams p{{{0.0, 1.0, 1.0}, {3.0, 2.0, 0.0}}, 2.0};
  const std::vector<double> f{5.0, 9.0};
  const auto m = predict_bma(p, f);
  EXPECT_NEAR(m.mean(), 5.0, 1e-12);
  EXPECT_NEAR(m.variance(), 2.0, 1e-12);
  EXPECT_NEAR(m.cdf(5.0), 0.5, 1e-12);

  BmaParams sym{{{0.0, 1.0, 0.5}, {0.0, 1.0, 0.5}}, 1.0};
  const std::vector<double> pm{-1.0, 1.0};
  const auto s = predict_bma(sym, pm);
  EXPECT_NEAR(s.mean(), 0.0, 1e-15);
  EXPECT_NEAR(s.cdf(0.0), 0.5, 1e-15);

  BmaParams gen{{{0.5, 0.9, 0.2}, {-1.0, 1.1, 0.5}, {0.0, 1.0, 0.3}}, 1.5};
  const std::vector<double> g{3.0, -2.0, 7.5};
  const double expected = 0.2 * (0.5 + 0.9 * 3.0) + 0.5 * (-1.0 - 1.1 * 2.0) + 0.3 * 7.5;
  EXPECT_NEAR(predict_bma(gen, g).mean(), expected, 1e-12);
  const std::vector<double> short_f{1.0};
  EXPECT_THROW(predict_bma(gen, short_f), std::invalid_argument);
}

namespace {

SynthSpec shared_error_spec(double theta, double range, std::uint64_t seed) {
  SynthSpec spec;
  spec.truth = SynthTruth::kBma;
  spec.stations = 200;
  spec.members = 3;
  spec.days = 26;
  spec.seed = seed;
  spec.member_sd = 0.05;
  spec.error_theta = theta;
  spec.error_range_km = range;
  return spec;
}

}  // namespace

TEST(FitSpatialBma, SharedErrorProcessIsRecoveredPerMember) {
  const auto data = generate(shared_error_spec(0.3, 120.0, 8));
  const auto w = fixture::window_over(0, 25, 25);
  const auto bma = fit_bma(data, w);
  const auto fit = fit_spatial_bma(data, w, bma.params);
  ASSERT_EQ(fit.params.member_fits.size(), 3u);
  for (const auto& f : fit.params.member_fits) {
    EXPECT_LE(rel(f.theta, 0.3), 0.25) << f.theta;
    EXPECT_LE(rel(f.range_km, 120.0), 0.25) << f.range_km;
  }
}

TEST(FitSpatialBma, IndependentResidualsGiveLargeNugget) {
  const auto data = generate(shared_error_spec(1.0, 120.0, 9));
  const auto w = fixture::window_over(0, 25, 25);
  const auto bma = fit_bma(data, w);
  const auto fit = fit_spatial_bma(data, w, bma.params);
  for (const auto& f : fit.params.member_fits) EXPECT_GE(f.theta, 0.8);
}

TEST(FitSpatialBma, SingleMemberReducesToSpatialFit) {
  auto spec = shared_error_spec(0.4, 100.0, 10);
  spec.members = 1;
  spec.stations = 80;
  const auto data = generate(spec);
  const auto w = fixture::window_over(0, 25, 25);
  const auto bma = fit_bma(data, w);
  const auto fit = fit_spatial_bma(data, w, bma.params, 20);
  const auto& m = bma.params.members[0];
  const auto panel = standardize_errors(data, w, [&](std::size_t d, std::size_t s) -> std::optional<GaussianPredictive> {
    return GaussianPredictive(m.a + m.b * *data.forecast(d, s, 0), bma.params.sigma2);
  });
  const PairDistances pairs(data.stations());
  const auto v = empirical_variogram(panel, pairs, 20);
  const auto direct = fit_variogram(v.bins, pairs.max_distance());
  EXPECT_NEAR(fit.params.member_fits[0].theta, direct.theta, 1e-9);
  EXPECT_NEAR(fit.params.member_fits[0].range_km, direct.range_km, 1e-6);
}

TEST(SampleSpatialBma, DegenerateWeightUsesFirstMember) {
  const auto st = fixture::line_stations(4);
  SpatialBmaParams p;
  p.bma = {{{1.0, 2.0, 1.0}, {0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}}, 1e-12};
  p.member_fits = {nugget_fit(0.5, 50), nugget_fit(0.5, 50), nugget_fit(0.5, 50)};
  Eigen::MatrixXd f(4, 3);
  f << 1, 10, 20, 2, 11, 21, 3, 12, 22, 4, 13, 23;
  auto rng = seeded_rng(11, "test/bma");
  const auto out = sample_spatial_bma(p, f, st, 200, rng);
  EXPECT_EQ(out.provenance, Provenance::kSpatialBma);
  for (Eigen::Index i = 0; i < out.fields.rows(); ++i) {
    for (Eigen::Index s = 0; s < 4; ++s) EXPECT_NEAR(out.fields(i, s), 1.0 + 2.0 * f(s, 0), 1e-4);
  }
}

TEST(SampleSpatialBma, PureNuggetVarianceEqualsKernelVariance) {
  const auto st = fixture::line_stations(3, 50.0);
  SpatialBmaParams p;
  p.bma = {{{0.0, 1.0, 0.5}, {0.0, 1.0, 0.5}}, 2.0};
  p.member_fits = {nugget_fit(1.0, 50), nugget_fit(1.0, 80)};
  Eigen::MatrixXd f = Eigen::MatrixXd::Constant(3, 2, 4.0);
  auto rng = seeded_rng(12, "test/bma");
  const auto out = sample_spatial_bma(p, f, st, 100000, rng);
  for (Eigen::Index s = 0; s < 3; ++s) {
    const Eigen::ArrayXd x = out.fields.col(s).array() - out.fields.col(s).mean();
    EXPECT_LE(rel(x.square().sum() / (x.size() - 1), 2.0), 0.03);
  }
}

TEST(SampleSpatialBma, EmptyRequestAndMarginalMeans) {
  const auto st = fixture::line_stations(3, 50.0);
  SpatialBmaParams p;
  p.bma = {{{0.5, 1.0, 0.6}, {-0.5, 0.9, 0.4}}, 1.0};
  p.member_fits = {nugget_fit(0.2, 100), nugget_fit(0.6, 30)};
  Eigen::MatrixXd f(3, 2);
  f << 1, 4, 2, -1, 0, 0;
  auto rng = seeded_rng(13, "test/bma");
  EXPECT_EQ(sample_spatial_bma(p, f, st, 0, rng).fields.rows(), 0);
  const auto out = sample_spatial_bma(p, f, st, 100000, rng);
  for (Eigen::Index s = 0; s < 3; ++s) {
    const std::vector<double> fs{f(s, 0), f(s, 1)};
    const auto mix = predict_bma(p.bma, fs);
    const double se = std::sqrt(mix.variance() / 1e5);
    EXPECT_LE(std::abs(out.fields.col(s).mean() - mix.mean()), 3 * se);
  }
}
