#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fieldcast/bma.hpp"
#include "fieldcast/config.hpp"
#include "fieldcast/ngr.hpp"
#include "fieldcast/serialize.hpp"
#include "fieldcast/types.hpp"
#include "fieldcast/verify.hpp"

namespace fieldcast {

enum class Method { kNgrPlus, kNgrC, kBma };
enum class SpatialMode { kNone, kGrf, kEcc, kSpatialBma };

std::string_view to_string(Method m);
std::string_view to_string(SpatialMode s);
Method parse_method(std::string_view s);
SpatialMode parse_spatial_mode(std::string_view s);

// ecc needs a univariate method (any), grf a Gaussian one, spatial-bma needs bma.
bool valid_combination(Method m, SpatialMode s);

// Label of the joint forecast: "ngr+", "spatial-ngr+", "ecc-ngr+", "bma",
// "ecc-bma", "spatial-bma", ...
std::string method_label(Method m, SpatialMode s);

// Usage errors in configurations or flags.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Region {
  std::string name;
  std::vector<std::string> station_ids;
};

struct FitSettings {
  std::size_t variogram_bins = 20;
  NgrFitOptions ngr;
  NgrCOptions ngr_c;
  BmaFitOptions bma;
};

// Fits the univariate model for the window and, when `spatial` needs one,
// the spatial dependence model. `warm` holds the previous day's parameters
// of the same method and seeds the optimizers.
ModelParameters fit_day(const EnsembleDataset& data, const TrainingWindow& window, Method method,
                        SpatialMode spatial, const FitSettings& settings = {},
                        const ModelParameters* warm = nullptr,
                        std::vector<std::string>* warnings = nullptr);

Method method_of(const ModelParameters& params);

// Predictive at (day, station); nullopt when every member is missing.
std::optional<UnivariatePredictive> predictive_at(const ModelParameters& params,
                                                  const EnsembleDataset& data, std::size_t day,
                                                  std::size_t station);

// Member summaries and predictives at the given stations of one day. All
// stations must carry at least one member value.
struct DayForecast {
  std::size_t day = 0;
  std::vector<std::size_t> stations;
  std::vector<MemberSummary> members;
  std::vector<UnivariatePredictive> predictives;

  std::vector<std::string> station_ids(const EnsembleDataset& data) const;
};

DayForecast forecast_day(const ModelParameters& params, const EnsembleDataset& data,
                         std::size_t day, std::span<const std::size_t> stations);

// Stations of `day` with at least one member value (and an observation when
// `require_observation`).
std::vector<std::size_t> usable_stations(const EnsembleDataset& data, std::size_t day,
                                         bool require_observation);

// Raw ensemble as M fields (missing members imputed).
ForecastFieldSample raw_fields(const EnsembleDataset& data, std::size_t day,
                               std::span<const std::size_t> stations);

// Joint forecast fields. kNone and kGrf draw `n` fields, kEcc returns M
// reordered quantile fields, kSpatialBma draws `n` fields from the spatial
// mixture.
ForecastFieldSample sample_day(const ModelParameters& params, SpatialMode spatial,
                               const EnsembleDataset& data, const DayForecast& forecast,
                               std::size_t n, RandomStream& rng);

struct ExperimentConfig {
  std::filesystem::path data_dir;
  std::vector<std::string> methods{"ngr+"};
  std::vector<std::string> spatial{"none"};
  std::size_t window = 25;
  std::size_t crps_samples = 5000;
  std::size_t field_samples = 10000;
  std::vector<double> thresholds{0.0};
  std::vector<Region> regions;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  std::size_t variogram_bins = 20;
  // Score at most this many target days (the first ones); 0 scores all.
  std::size_t max_target_days = 0;
  // Worker threads for scoring; 0 uses the hardware concurrency.
  std::size_t threads = 0;
};

// Keys: data, method, spatial, window, crps_samples, samples, threshold,
// region.<name>, seed, out, bins, max_days, threads. Throws UsageError on
// unknown keys or malformed values.
ExperimentConfig experiment_config_from(const KeyValueConfig& cfg);

// Expands "all" and validates. With both lists explicit every pair must be
// valid; "all" on either side keeps only the valid pairs.
std::vector<std::pair<Method, SpatialMode>> expand_combinations(const ExperimentConfig& config);

struct ExperimentResult {
  ScoreTable scores;
  std::vector<ModelParameters> parameters;
  std::map<std::string, Histogram> pit_histograms;
  std::map<std::string, Histogram> rank_histograms;
  // Keyed by "<label>_<region>".
  std::map<std::string, Histogram> band_depth_histograms;
  std::vector<Date> scored_days;
  std::vector<Date> skipped_days;
  std::vector<std::string> warnings;

  // JSON summary with per-label means (univariate) and per-region,
  // per-label means (multivariate).
  std::string summary_json() const;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const EnsembleDataset& data);

// Writes scores.csv, summary.json, params.json and histograms/*.csv.
void write_experiment_outputs(const ExperimentResult& result,
                              const std::filesystem::path& out_dir);

}  // namespace fieldcast
