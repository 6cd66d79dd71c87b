#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fieldcast/random.hpp"
#include "fieldcast/types.hpp"

namespace fieldcast {

struct VariogramBin {
  double distance_km = 0.0;
  double gamma = 0.0;
  std::size_t pairs = 0;
};

// Exponential-plus-nugget correlation model fitted to binned half squared
// differences of standardized errors.
struct VariogramFit {
  double theta = 0.0;
  double range_km = 1.0;
  std::vector<VariogramBin> bins;
  double objective = 0.0;
  bool degenerate = false;
  bool converged = true;
  std::vector<std::string> warnings;
};

// Standardized errors (y - mu) / sigma indexed by (training day, station).
struct StandardizedErrorPanel {
  std::vector<std::size_t> days;
  std::size_t station_count = 0;
  std::vector<std::optional<double>> values;

  std::optional<double> at(std::size_t day_slot, std::size_t station) const {
    return values[day_slot * station_count + station];
  }
};

// Predictive law for (day index, station index); nullopt when unavailable.
using PredictiveLookup =
    std::function<std::optional<GaussianPredictive>(std::size_t day, std::size_t station)>;

StandardizedErrorPanel standardize_errors(const EnsembleDataset& data,
                                          const TrainingWindow& window,
                                          const PredictiveLookup& predictive);

// All station pairs (i < j) with their distances, sorted by distance.
class PairDistances {
 public:
  explicit PairDistances(const StationSet& stations);

  struct Pair {
    std::size_t i;
    std::size_t j;
    double distance_km;
  };

  std::size_t station_count() const { return station_count_; }
  std::span<const Pair> pairs() const { return pairs_; }
  double max_distance() const { return pairs_.empty() ? 0.0 : pairs_.back().distance_km; }

 private:
  std::size_t station_count_;
  std::vector<Pair> pairs_;
};

// Per-pair mean over days of 0.5 (e_i - e_j)^2, in PairDistances order.
// Pairs never observed together are nullopt.
std::vector<std::optional<double>> pair_half_squared_differences(
    const StandardizedErrorPanel& panel, const PairDistances& pairs);

struct EmpiricalVariogram {
  std::vector<VariogramBin> bins;
  std::size_t pairs_used = 0;
  std::vector<std::string> warnings;
};

// Groups pair values into `bin_count` bins of (nearly) equal pair counts.
EmpiricalVariogram bin_pair_values(std::span<const std::optional<double>> values,
                                   const PairDistances& pairs, std::size_t bin_count);

EmpiricalVariogram empirical_variogram(const StandardizedErrorPanel& panel,
                                       const PairDistances& pairs, std::size_t bin_count = 20);
EmpiricalVariogram empirical_variogram(const StandardizedErrorPanel& panel,
                                       const StationSet& stations, std::size_t bin_count = 20);

// (1 - theta)(1 - exp(-d / r)) + theta * (same_site ? 0 : 1)
double variogram_model(double theta, double range_km, double distance_km, bool same_site);
// (1 - theta) exp(-d / r) + theta * (same_site ? 1 : 0)
double correlation_model(double theta, double range_km, double distance_km, bool same_site);

// Cressie weighted least squares: sum_l n_l ((g_l - gamma(d_l)) / gamma(d_l))^2.
double variogram_objective(std::span<const VariogramBin> bins, double theta, double range_km);

struct VariogramStart {
  double theta = 0.1;
  double range_km = 0.0;
};

// Minimizes the Cressie objective over theta in [0, 1], r in (0, r_max].
// The default start is (0.1, r_max / 8).
VariogramFit fit_variogram(std::span<const VariogramBin> bins, double r_max,
                           std::optional<VariogramStart> start = std::nullopt);

Eigen::MatrixXd build_correlation_matrix(double theta, double range_km,
                                         const StationSet& stations);
Eigen::MatrixXd build_correlation_matrix(const VariogramFit& fit, const StationSet& stations);

MultivariatePredictive build_spatial_ngr(std::vector<std::string> station_order,
                                         const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
                                         const Eigen::MatrixXd& correlation);

// Lower-triangular factor of a correlation matrix. Adds diagonal jitter
// 1e-10, 1e-9, ..., 1e-6 until the factorization succeeds.
class CorrelatedSampler {
 public:
  explicit CorrelatedSampler(const Eigen::MatrixXd& correlation);

  double jitter() const { return jitter_; }
  Eigen::Index dimension() const { return lower_.rows(); }
  const Eigen::MatrixXd& lower() const { return lower_; }

  // n x dimension matrix of correlated standard normal rows.
  Eigen::MatrixXd draw(std::size_t n, RandomStream& rng) const;

 private:
  Eigen::MatrixXd lower_;
  double jitter_ = 0.0;
};

ForecastFieldSample sample_fields(const MultivariatePredictive& pred, std::size_t n_samples,
                                  RandomStream& rng);

}  // namespace fieldcast
