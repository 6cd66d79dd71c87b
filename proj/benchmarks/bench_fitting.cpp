#include <benchmark/benchmark.h>

#include "fieldcast/bma.hpp"
#include "fieldcast/ingest.hpp"
#include "fieldcast/ngr.hpp"
#include "fieldcast/spatial.hpp"
#include "fieldcast/synth.hpp"

namespace {

using namespace fieldcast;

const EnsembleDataset& desk_dataset() {
  static const EnsembleDataset data = [] {
    SynthSpec spec;
    spec.days = 30;
    spec.error_theta = 0.3;
    spec.error_range_km = 120.0;
    return generate(spec);
  }();
  return data;
}

TrainingWindow last_window() {
  const auto& data = desk_dataset();
  return *window_for_day(data, data.day_count() - 1, 25);
}

void BM_FitNgrPlus(benchmark::State& state) {
  const auto w = last_window();
  for (auto _ : state) benchmark::DoNotOptimize(fit_ngr_plus(desk_dataset(), w).params.a);
}
BENCHMARK(BM_FitNgrPlus)->Unit(benchmark::kMillisecond);

void BM_FitNgrC(benchmark::State& state) {
  const auto w = last_window();
  for (auto _ : state) benchmark::DoNotOptimize(fit_ngr_c(desk_dataset(), w).params.c_raw);
}
BENCHMARK(BM_FitNgrC)->Unit(benchmark::kMillisecond);

void BM_FitBma(benchmark::State& state) {
  const auto w = last_window();
  for (auto _ : state) benchmark::DoNotOptimize(fit_bma(desk_dataset(), w).params.sigma2);
}
BENCHMARK(BM_FitBma)->Unit(benchmark::kMillisecond);

void BM_VariogramPipeline(benchmark::State& state) {
  const auto& data = desk_dataset();
  const auto w = last_window();
  const auto fit = fit_ngr_plus(data, w).params;
  const PairDistances pairs(data.stations());
  for (auto _ : state) {
    const auto panel = standardize_errors(data, w, [&](std::size_t d, std::size_t s) {
      const auto m = summarize_members(data.member_values(d, s));
      return std::optional<GaussianPredictive>(predict_ngr_plus(fit, m->values, m->variance));
    });
    const auto ev = empirical_variogram(panel, pairs);
    benchmark::DoNotOptimize(fit_variogram(ev.bins, pairs.max_distance()).theta);
  }
}
BENCHMARK(BM_VariogramPipeline)->Unit(benchmark::kMillisecond);

void BM_SampleFields(benchmark::State& state) {
  const auto& stations = desk_dataset().stations();
  const auto corr = build_correlation_matrix(0.2, 150.0, stations);
  const auto n = static_cast<Eigen::Index>(stations.size());
  const MultivariatePredictive pred(stations.ids(), Eigen::VectorXd::Zero(n),
                                    Eigen::VectorXd::Ones(n), corr);
  RandomStream rng(1, "bench/fields");
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_fields(pred, static_cast<std::size_t>(state.range(0)), rng));
  }
}
BENCHMARK(BM_SampleFields)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
