#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fieldcast/random.hpp"
#include "fieldcast/spatial.hpp"
#include "fieldcast/types.hpp"

namespace fieldcast {

struct BmaMember {
  double a = 0.0;
  double b = 1.0;
  double weight = 0.0;
};

// Gaussian kernel dressing of bias-corrected members with a shared variance.
struct BmaParams {
  std::vector<BmaMember> members;
  double sigma2 = 1.0;
};

struct BmaFitOptions {
  double em_tolerance = 1e-6;
  int max_iterations = 500;
};

struct BmaFit {
  BmaParams params;
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

// Member-wise OLS bias correction followed by EM on (weights, sigma^2).
BmaFit fit_bma(const EnsembleDataset& data, const TrainingWindow& window,
               const BmaFitOptions& options = {});

MixturePredictive predict_bma(const BmaParams& params, std::span<const double> forecasts);

struct SpatialBmaParams {
  BmaParams bma;
  std::vector<VariogramFit> member_fits;
};

struct SpatialBmaFit {
  SpatialBmaParams params;
  std::vector<std::string> warnings;
};

// Fits one exponential-plus-nugget model per member to the standardized
// residuals (y - a_m - b_m f_m) / sigma of that member.
SpatialBmaFit fit_spatial_bma(const EnsembleDataset& data, const TrainingWindow& window,
                              const BmaParams& bma, std::size_t bins = 20);

// Fields: pick member m with probability w_m, then
// a_m + b_m F_m + sigma * E_m with E_m a correlated standard field.
// `forecasts` is stations x members.
ForecastFieldSample sample_spatial_bma(const SpatialBmaParams& params,
                                       const Eigen::MatrixXd& forecasts,
                                       const StationSet& stations, std::size_t n_samples,
                                       RandomStream& rng);

}  // namespace fieldcast
