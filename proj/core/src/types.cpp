#include "fieldcast/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "fieldcast/distributions.hpp"

namespace fieldcast {

double distance_km(const Station& a, const Station& b) {
  return std::hypot(a.x_km - b.x_km, a.y_km - b.y_km);
}

StationSet::StationSet(std::vector<Station> stations) : stations_(std::move(stations)) {
  index_.reserve(stations_.size());
  for (std::size_t i = 0; i < stations_.size(); ++i) {
    const Station& s = stations_[i];
    if (!std::isfinite(s.x_km) || !std::isfinite(s.y_km)) {
      throw std::invalid_argument("station '" + s.id + "' has non-finite coordinates");
    }
    if (!index_.emplace(s.id, i).second) {
      throw std::invalid_argument("duplicate station id '" + s.id + "'");
    }
  }
}

std::optional<std::size_t> StationSet::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t StationSet::require_index(std::string_view id) const {
  if (auto i = index_of(id)) return *i;
  throw std::out_of_range("unknown station id '" + std::string(id) + "'");
}

double StationSet::distance(std::size_t i, std::size_t j) const {
  return distance_km(stations_[i], stations_[j]);
}

std::vector<std::string> StationSet::ids() const {
  std::vector<std::string> out;
  out.reserve(stations_.size());
  for (const auto& s : stations_) out.push_back(s.id);
  return out;
}

StationSet StationSet::subset(std::span<const std::string> ids) const {
  std::vector<Station> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(stations_[require_index(id)]);
  return StationSet(std::move(out));
}

EnsembleDataset::EnsembleDataset(StationSet stations, std::vector<Date> days, int members,
                                 std::vector<std::optional<double>> forecasts,
                                 std::vector<std::optional<double>> observations)
    : stations_(std::move(stations)),
      days_(std::move(days)),
      members_(members),
      forecasts_(std::move(forecasts)),
      observations_(std::move(observations)) {
  if (members_ < 1) throw std::invalid_argument("ensemble needs at least one member");
  const std::size_t cells = days_.size() * stations_.size();
  if (forecasts_.size() != cells * static_cast<std::size_t>(members_)) {
    throw std::invalid_argument("forecast array does not match days x stations x members");
  }
  if (observations_.size() != cells) {
    throw std::invalid_argument("observation array does not match days x stations");
  }
  if (!std::is_sorted(days_.begin(), days_.end()) ||
      std::adjacent_find(days_.begin(), days_.end()) != days_.end()) {
    throw std::invalid_argument("days must be strictly increasing");
  }
  eliminated_.assign(days_.size(), false);
  for (std::size_t d = 0; d < days_.size(); ++d) {
    for (int m = 0; m < members_ && !eliminated_[d]; ++m) {
      bool missing_everywhere = stations_.size() > 0;
      for (std::size_t s = 0; s < stations_.size(); ++s) {
        if (forecast(d, s, m)) {
          missing_everywhere = false;
          break;
        }
      }
      eliminated_[d] = missing_everywhere;
    }
  }
}

std::size_t EnsembleDataset::eliminated_count() const {
  return static_cast<std::size_t>(std::count(eliminated_.begin(), eliminated_.end(), true));
}

std::optional<std::size_t> EnsembleDataset::day_index(std::string_view date) const {
  const auto it = std::lower_bound(days_.begin(), days_.end(), date);
  if (it == days_.end() || *it != date) return std::nullopt;
  return static_cast<std::size_t>(it - days_.begin());
}

bool operator==(const EnsembleDataset& a, const EnsembleDataset& b) {
  if (a.days_ != b.days_ || a.members_ != b.members_ || a.forecasts_ != b.forecasts_ ||
      a.observations_ != b.observations_ || a.stations_.size() != b.stations_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.stations_.size(); ++i) {
    const Station& x = a.stations_[i];
    const Station& y = b.stations_[i];
    if (x.id != y.id || x.x_km != y.x_km || x.y_km != y.y_km || x.lon != y.lon ||
        x.lat != y.lat) {
      return false;
    }
  }
  return true;
}

GaussianPredictive::GaussianPredictive(double mean, double variance)
    : mean_(mean), variance_(std::max(variance, kVarianceFloor)) {
  if (!std::isfinite(mean) || !std::isfinite(variance)) {
    throw std::domain_error("GaussianPredictive: non-finite parameters");
  }
}

double GaussianPredictive::sd() const { return std::sqrt(variance_); }

double GaussianPredictive::cdf(double x) const { return gaussian_cdf((x - mean_) / sd()); }

double GaussianPredictive::pdf(double x) const {
  const double s = sd();
  return gaussian_pdf((x - mean_) / s) / s;
}

double GaussianPredictive::quantile(double p) const { return mean_ + sd() * gaussian_quantile(p); }

MixturePredictive::MixturePredictive(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
  double total = 0.0;
  for (auto& c : components_) {
    if (!(c.weight >= 0.0)) throw std::invalid_argument("mixture weights must be non-negative");
    if (!std::isfinite(c.mean)) throw std::domain_error("mixture component mean not finite");
    c.variance = std::max(c.variance, kVarianceFloor);
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-10) {
    throw std::invalid_argument("mixture weights must sum to one");
  }
}

double MixturePredictive::mean() const {
  double m = 0.0;
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

double MixturePredictive::variance() const {
  const double mu = mean();
  double v = 0.0;
  for (const auto& c : components_) v += c.weight * (c.variance + (c.mean - mu) * (c.mean - mu));
  return v;
}

double MixturePredictive::cdf(double x) const {
  double p = 0.0;
  for (const auto& c : components_) {
    p += c.weight * gaussian_cdf((x - c.mean) / std::sqrt(c.variance));
  }
  return p;
}

double MixturePredictive::pdf(double x) const {
  double p = 0.0;
  for (const auto& c : components_) {
    const double s = std::sqrt(c.variance);
    p += c.weight * gaussian_pdf((x - c.mean) / s) / s;
  }
  return p;
}

double MixturePredictive::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("mixture quantile: p must lie in (0, 1)");
  }
  // Every component quantile brackets the mixture quantile from one side.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  const double z = gaussian_quantile(p);
  for (const auto& c : components_) {
    if (c.weight <= 0.0) continue;
    const double q = c.mean + std::sqrt(c.variance) * z;
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  if (hi - lo <= 0.0) return lo;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double mean(const UnivariatePredictive& dist) {
  return std::visit([](const auto& d) { return d.mean(); }, dist);
}
double variance(const UnivariatePredictive& dist) {
  return std::visit([](const auto& d) { return d.variance(); }, dist);
}
double median(const UnivariatePredictive& dist) {
  return std::visit([](const auto& d) { return d.median(); }, dist);
}
double cdf(const UnivariatePredictive& dist, double x) {
  return std::visit([x](const auto& d) { return d.cdf(x); }, dist);
}
double quantile(const UnivariatePredictive& dist, double p) {
  return std::visit([p](const auto& d) { return d.quantile(p); }, dist);
}

void validate_correlation(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols()) throw std::invalid_argument("correlation matrix must be square");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (p(i, i) != 1.0) throw std::invalid_argument("correlation diagonal must be exactly 1");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(p(i, j) - p(j, i)) > 1e-12) {
        throw std::invalid_argument("correlation matrix must be symmetric");
      }
    }
  }
  if (p.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -1e-8) {
    throw std::invalid_argument("correlation matrix is not positive semidefinite");
  }
}

MultivariatePredictive::MultivariatePredictive(std::vector<std::string> station_order,
                                               Eigen::VectorXd mu, Eigen::VectorXd scale,
                                               Eigen::MatrixXd correlation)
    : station_order_(std::move(station_order)),
      mu_(std::move(mu)),
      scale_(std::move(scale)),
      correlation_(std::move(correlation)) {
  const auto n = static_cast<Eigen::Index>(station_order_.size());
  if (mu_.size() != n || scale_.size() != n || correlation_.rows() != n) {
    throw std::invalid_argument("MultivariatePredictive: dimension mismatch");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(scale_[i] > 0.0)) throw std::invalid_argument("MultivariatePredictive: scale must be > 0");
  }
  validate_correlation(correlation_);
}

Eigen::MatrixXd MultivariatePredictive::covariance() const {
  return scale_.asDiagonal() * correlation_ * scale_.asDiagonal();
}

GaussianPredictive MultivariatePredictive::marginal(Eigen::Index i) const {
  return {mu_[i], scale_[i] * scale_[i]};
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kRaw: return "raw";
    case Provenance::kIndependent: return "independent";
    case Provenance::kEcc: return "ecc";
    case Provenance::kGrfSpatial: return "grf-spatial";
    case Provenance::kSpatialBma: return "spatial-bma";
  }
  return "raw";
}

Provenance parse_provenance(std::string_view s) {
  for (auto p : {Provenance::kRaw, Provenance::kIndependent, Provenance::kEcc,
                 Provenance::kGrfSpatial, Provenance::kSpatialBma}) {
    if (to_string(p) == s) return p;
  }
  throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

void ForecastFieldSample::validate() const {
  if (fields.cols() != static_cast<Eigen::Index>(station_order.size())) {
    throw std::invalid_argument("field sample columns do not match station order");
  }
  if (!fields.allFinite()) throw std::invalid_argument("field sample has missing entries");
}

}  // namespace fieldcast
