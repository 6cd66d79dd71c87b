#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fieldcast/bma.hpp"
#include "fieldcast/config.hpp"
#include "fieldcast/ngr.hpp"
#include "fieldcast/types.hpp"

namespace fieldcast {

enum class SynthTruth { kNgrPlus, kNgrC, kBma };

std::string_view to_string(SynthTruth t);
SynthTruth parse_synth_truth(std::string_view s);

// Recipe for a synthetic panel with a known generating law.
//
// Members are a latent field (station climate plus a smooth daily anomaly)
// plus correlated member perturbations whose amplitude varies by day and by
// station, so the ensemble variance carries information. Observations apply
// the truth model to the generated members and add a standard Gaussian
// error field with exponential-plus-nugget correlation (error_theta,
// error_range_km), scaled by the truth model's predictive standard deviation.
struct SynthSpec {
  std::size_t stations = 100;
  double width_km = 600.0;
  double height_km = 600.0;
  // Regular grid layout instead of uniform random placement.
  bool grid_layout = false;
  int members = 20;
  std::size_t days = 60;
  std::string start_date = "2024-01-01";

  SynthTruth truth = SynthTruth::kNgrPlus;
  // Truth for kNgrPlus. Empty beta means b_m = 1 / M.
  NgrPlusParams ngr_plus{1.0, {}, 1.0, 0.5};
  // Truth for kNgrC: b (empty means 1 / M) and (c, d). Climatology is
  // derived from the panel: ybar_s = climate_s + obs_offset and
  // xi2_s = d E[S_s^2] / (1 - c), the residual variance of the model itself.
  std::vector<double> ngr_c_b;
  double ngr_c_c = 0.5;
  double ngr_c_d = 0.5;
  double obs_offset = 0.5;
  // Truth for kBma. Empty members means equal weights, a = 0, b = 1.
  BmaParams bma;
  // Draw the BMA member once per field (day) instead of per station.
  bool bma_member_per_day = false;

  double error_theta = 1.0;
  double error_range_km = 100.0;
  // Multiplies the observation error; 0 gives observations equal to the
  // truth-model mean.
  double noise_scale = 1.0;

  double climate_mean = 10.0;
  double climate_sd = 3.0;
  double anomaly_sd = 4.0;
  double anomaly_range_km = 300.0;
  // Base member perturbation standard deviation.
  double member_sd = 1.0;
  // When positive, member_sd is set so the typical ensemble spread is this
  // fraction of the truth predictive standard deviation (kNgrPlus, kBma).
  double spread_ratio = 0.0;
  double member_theta = 0.3;
  double member_range_km = 150.0;
  // Log-normal day and station multipliers of the member perturbations.
  double spread_day_log_sd = 0.4;
  double spread_station_log_sd = 0.3;

  double missing_observation_fraction = 0.0;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument when inconsistent.
  void validate() const;
};

// Reads a spec from a manifest. Keys mirror the field names, except that
// the truth coefficients are given on their natural scale: `a`, `b` (one
// value for all members or a list), `c`, `d` for ngr+ and ngrc, and
// `weights`, `bma_a`, `bma_b`, `sigma2` for bma. `layout` is grid or random.
// Throws std::invalid_argument on unknown keys.
SynthSpec synth_spec_from(const KeyValueConfig& cfg);

// Station layout of a SynthSpec, ids S001, S002, ...
StationSet synth_stations(const SynthSpec& spec);

EnsembleDataset generate(const SynthSpec& spec);

// Trapezoidal integration of (F(x) - 1{x >= y})^2 over
// [mean - 10 sd, mean + 10 sd] (widened to contain y), split at y.
double brute_force_crps(const UnivariatePredictive& dist, double y, double grid_step);

}  // namespace fieldcast
