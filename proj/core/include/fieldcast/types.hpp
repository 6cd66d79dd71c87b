#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace fieldcast {

// Lower bound applied to every predictive variance (degrees C squared).
inline constexpr double kVarianceFloor = 1e-8;

// Dates are opaque labels ordered lexicographically (ISO-8601 sorts correctly).
using Date = std::string;

struct Station {
  std::string id;
  double x_km = 0.0;
  double y_km = 0.0;
  std::optional<double> lon;
  std::optional<double> lat;
};

double distance_km(const Station& a, const Station& b);

// Ordered set of stations with unique ids and finite planar coordinates.
class StationSet {
 public:
  StationSet() = default;
  explicit StationSet(std::vector<Station> stations);

  std::size_t size() const { return stations_.size(); }
  bool empty() const { return stations_.empty(); }
  const Station& operator[](std::size_t i) const { return stations_[i]; }
  std::span<const Station> stations() const { return stations_; }
  auto begin() const { return stations_.begin(); }
  auto end() const { return stations_.end(); }

  std::optional<std::size_t> index_of(std::string_view id) const;
  std::size_t require_index(std::string_view id) const;
  double distance(std::size_t i, std::size_t j) const;
  std::vector<std::string> ids() const;

  // Stations in the order of `ids`; throws on unknown ids.
  StationSet subset(std::span<const std::string> ids) const;

 private:
  std::vector<Station> stations_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Station x day x member forecasts plus verifying observations.
//
// Forecast storage is day-major: (day, station, member). Missing values are
// carried as empty optionals. A day is eliminated when at least one member is
// missing at every station on that day.
class EnsembleDataset {
 public:
  EnsembleDataset() = default;
  EnsembleDataset(StationSet stations, std::vector<Date> days, int members,
                  std::vector<std::optional<double>> forecasts,
                  std::vector<std::optional<double>> observations);

  const StationSet& stations() const { return stations_; }
  const std::vector<Date>& days() const { return days_; }
  int members() const { return members_; }
  std::size_t day_count() const { return days_.size(); }
  std::size_t station_count() const { return stations_.size(); }

  std::optional<double> forecast(std::size_t day, std::size_t station, int member) const {
    return forecasts_[offset(day, station) * members_ + member];
  }
  std::span<const std::optional<double>> member_values(std::size_t day,
                                                       std::size_t station) const {
    return {forecasts_.data() + offset(day, station) * members_,
            static_cast<std::size_t>(members_)};
  }
  std::optional<double> observation(std::size_t day, std::size_t station) const {
    return observations_[offset(day, station)];
  }
  bool eliminated(std::size_t day) const { return eliminated_[day]; }
  std::size_t eliminated_count() const;
  std::optional<std::size_t> day_index(std::string_view date) const;

  std::span<const std::optional<double>> raw_forecasts() const { return forecasts_; }
  std::span<const std::optional<double>> raw_observations() const { return observations_; }

  friend bool operator==(const EnsembleDataset& a, const EnsembleDataset& b);

 private:
  std::size_t offset(std::size_t day, std::size_t station) const {
    return day * stations_.size() + station;
  }

  StationSet stations_;
  std::vector<Date> days_;
  int members_ = 0;
  std::vector<std::optional<double>> forecasts_;
  std::vector<std::optional<double>> observations_;
  std::vector<bool> eliminated_;
};

// Target day plus the most recent non-eliminated days strictly before it.
// Both are indices into EnsembleDataset::days().
struct TrainingWindow {
  std::size_t target_day = 0;
  std::vector<std::size_t> training_days;
};

class GaussianPredictive {
 public:
  GaussianPredictive(double mean, double variance);

  double mean() const { return mean_; }
  double variance() const { return variance_; }
  double sd() const;
  double median() const { return mean_; }
  double cdf(double x) const;
  double pdf(double x) const;
  double quantile(double p) const;

 private:
  double mean_;
  double variance_;
};

struct MixtureComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 1.0;
};

// Finite Gaussian mixture. Weights are non-negative and sum to one.
class MixturePredictive {
 public:
  explicit MixturePredictive(std::vector<MixtureComponent> components);

  std::span<const MixtureComponent> components() const { return components_; }
  double mean() const;
  double variance() const;
  double median() const { return quantile(0.5); }
  double cdf(double x) const;
  double pdf(double x) const;
  // Bracketed bisection to 1e-10.
  double quantile(double p) const;

 private:
  std::vector<MixtureComponent> components_;
};

using UnivariatePredictive = std::variant<GaussianPredictive, MixturePredictive>;

double mean(const UnivariatePredictive& dist);
double variance(const UnivariatePredictive& dist);
double median(const UnivariatePredictive& dist);
double cdf(const UnivariatePredictive& dist, double x);
double quantile(const UnivariatePredictive& dist, double p);

// N(mu, D P D) over an ordered set of stations.
class MultivariatePredictive {
 public:
  MultivariatePredictive(std::vector<std::string> station_order, Eigen::VectorXd mu,
                         Eigen::VectorXd scale, Eigen::MatrixXd correlation);

  const std::vector<std::string>& station_order() const { return station_order_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  const Eigen::MatrixXd& correlation() const { return correlation_; }
  Eigen::Index dimension() const { return mu_.size(); }
  Eigen::MatrixXd covariance() const;
  GaussianPredictive marginal(Eigen::Index i) const;

 private:
  std::vector<std::string> station_order_;
  Eigen::VectorXd mu_;
  Eigen::VectorXd scale_;
  Eigen::MatrixXd correlation_;
};

// Throws std::invalid_argument unless `p` is a valid correlation matrix
// (unit diagonal, symmetric within 1e-12, eigenvalues >= -1e-8).
void validate_correlation(const Eigen::MatrixXd& p);

enum class Provenance { kRaw, kIndependent, kEcc, kGrfSpatial, kSpatialBma };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

// n_samples x n_stations simulated or reordered forecast fields.
struct ForecastFieldSample {
  std::vector<std::string> station_order;
  Eigen::MatrixXd fields;
  Provenance provenance = Provenance::kRaw;
  std::uint64_t seed = 0;

  Eigen::Index sample_count() const { return fields.rows(); }
  void validate() const;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fieldcast
