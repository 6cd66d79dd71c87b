#include <benchmark/benchmark.h>

#include <vector>

#include "fieldcast/ngr.hpp"
#include "fieldcast/random.hpp"
#include "fieldcast/verify.hpp"

namespace {

using namespace fieldcast;

std::vector<double> gaussian_draws(std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed, "bench");
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  RandomStream rng(seed, "bench/matrix");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void BM_CrpsGaussian(benchmark::State& state) {
  const GaussianPredictive g(0.3, 1.7);
  double y = -0.4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(crps_gaussian(g, y));
    y += 1e-9;
  }
}
BENCHMARK(BM_CrpsGaussian);

void BM_CrpsEnsemble(benchmark::State& state) {
  const auto members = gaussian_draws(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(crps_ensemble(members, 0.1));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CrpsEnsemble)->RangeMultiplier(4)->Range(16, 16384)->Complexity();

void BM_CrpsSample(benchmark::State& state) {
  const auto x = gaussian_draws(5000, 2);
  const auto x2 = gaussian_draws(5000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(crps_sample(x, x2, 0.1));
}
BENCHMARK(BM_CrpsSample);

void BM_EnergyScoreTwoSample(benchmark::State& state) {
  const auto d = state.range(0);
  const auto x = gaussian_matrix(5000, d, 4);
  const auto x2 = gaussian_matrix(5000, d, 5);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(d);
  for (auto _ : state) benchmark::DoNotOptimize(energy_score(x, x2, y));
}
BENCHMARK(BM_EnergyScoreTwoSample)->Arg(8)->Arg(100);

void BM_SpatialMedian(benchmark::State& state) {
  const auto x = gaussian_matrix(state.range(0), 100, 6);
  for (auto _ : state) benchmark::DoNotOptimize(spatial_median(x).median);
}
BENCHMARK(BM_SpatialMedian)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_BandDepthRank(benchmark::State& state) {
  const auto x = gaussian_matrix(21, state.range(0), 7);
  RandomStream rng(8, "bench/ties");
  for (auto _ : state) benchmark::DoNotOptimize(band_depth_rank(x, 20, rng));
}
BENCHMARK(BM_BandDepthRank)->Arg(8)->Arg(100);

}  // namespace
