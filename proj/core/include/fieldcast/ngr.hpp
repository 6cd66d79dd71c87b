#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fieldcast/types.hpp"

namespace fieldcast {

// Closed-form CRPS of a Gaussian predictive:
// sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1 / sqrt(pi)), z = (y - mean) / sigma.
double crps_gaussian(const GaussianPredictive& dist, double y);

struct CrpsGradient {
  double d_mean = 0.0;
  double d_sigma = 0.0;
};

CrpsGradient crps_gaussian_gradient(const GaussianPredictive& dist, double y);

// Member values at one (day, station) with missing members imputed by the
// mean of the available ones. Variance uses divisor (available - 1) and is 0
// with fewer than two available members.
struct MemberSummary {
  std::vector<double> values;
  double mean = 0.0;
  double variance = 0.0;
  int available = 0;
};

std::optional<MemberSummary> summarize_members(std::span<const std::optional<double>> members);

// Non-negative regression via squaring: b_m = beta_m^2, c = c_raw^2, d = d_raw^2.
struct NgrPlusParams {
  double a = 0.0;
  std::vector<double> beta;
  double c_raw = 1.0;
  double d_raw = 1.0;

  double b(std::size_t m) const { return beta[m] * beta[m]; }
  double c() const { return c_raw * c_raw; }
  double d() const { return d_raw * d_raw; }

  // a = 0, beta_m = sqrt(1/M), c_raw = d_raw = 1.
  static NgrPlusParams default_start(int members);
};

struct FitDiagnostics {
  double objective = 0.0;
  double initial_objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t rows = 0;
  std::vector<std::string> warnings;
};

struct NgrFitOptions {
  int max_iterations = 2000;
  double gradient_tolerance = 1e-9;
};

struct NgrPlusFit {
  NgrPlusParams params;
  FitDiagnostics diagnostics;
};

// Minimizes the mean CRPS over every (training day, station) pair with an
// observation. Throws EstimationError when fewer than M + 3 pairs exist.
NgrPlusFit fit_ngr_plus(const EnsembleDataset& data, const TrainingWindow& window,
                        const std::optional<NgrPlusParams>& init = std::nullopt,
                        const NgrFitOptions& options = {});

// Mean CRPS of NGR+ predictives over the observed pairs of `days`.
double mean_crps_ngr_plus(const NgrPlusParams& params, const EnsembleDataset& data,
                          std::span<const std::size_t> days);

GaussianPredictive predict_ngr_plus(const NgrPlusParams& params, std::span<const double> forecasts,
                                    double ensemble_variance);

struct StationClimatology {
  double ybar = 0.0;
  std::vector<double> fbar;
  double xi2 = 0.0;
  std::size_t n_obs = 0;
};

struct NgrCParams {
  std::vector<double> b;
  double c_raw = 1.0;
  double d_raw = 1.0;
  std::map<std::string, StationClimatology> climatology;

  double c() const { return c_raw * c_raw; }
  double d() const { return d_raw * d_raw; }
};

struct NgrCFit {
  NgrCParams params;
  FitDiagnostics diagnostics;
  double ridge = 0.0;
  // Sum of squared step-one residuals over all stations.
  double total_squared_residual = 0.0;
};

struct NgrCOptions {
  // Ridge penalty on b; defaults to 1e-4 x number of training rows.
  std::optional<double> ridge;
  std::size_t min_station_observations = 5;
  double c_raw_start = 1.0;
  double d_raw_start = 1.0;
  NgrFitOptions fit;
};

// Two-step fit: ridge regression of observation anomalies on member
// anomalies, then CRPS minimization over (c, d) with b fixed.
NgrCFit fit_ngr_c(const EnsembleDataset& data, const TrainingWindow& window,
                  const NgrCOptions& options = {});

// Throws std::out_of_range when the station has no climatology.
GaussianPredictive predict_ngr_c(const NgrCParams& params, std::string_view station_id,
                                 std::span<const double> forecasts, double ensemble_variance);
GaussianPredictive predict_ngr_c(const NgrCParams& params, const StationClimatology& clim,
                                 std::span<const double> forecasts, double ensemble_variance);

// Inverse-distance-weighted climatology at `target` from the stations of
// `stations` that carry one in `params`.
StationClimatology interpolate_ngr_c(const NgrCParams& params, const Station& target,
                                     const StationSet& stations, double power = 2.0);

}  // namespace fieldcast
