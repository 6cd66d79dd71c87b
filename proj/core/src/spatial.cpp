#include "fieldcast/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "fieldcast/optimize.hpp"

namespace fieldcast {
namespace {

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

StandardizedErrorPanel standardize_errors(const EnsembleDataset& data,
                                          const TrainingWindow& window,
                                          const PredictiveLookup& predictive) {
  StandardizedErrorPanel panel;
  panel.days = window.training_days;
  panel.station_count = data.station_count();
  panel.values.resize(panel.days.size() * panel.station_count);
  for (std::size_t k = 0; k < panel.days.size(); ++k) {
    const std::size_t d = panel.days[k];
    for (std::size_t s = 0; s < panel.station_count; ++s) {
      const auto y = data.observation(d, s);
      if (!y) continue;
      const auto pred = predictive(d, s);
      if (!pred) {
        throw std::invalid_argument("standardize_errors: missing predictive for day " +
                                    data.days()[d] + ", station " + data.stations()[s].id);
      }
      if (pred->variance() < kVarianceFloor) {
        throw std::domain_error("standardize_errors: predictive variance below floor");
      }
      panel.values[k * panel.station_count + s] = (*y - pred->mean()) / pred->sd();
    }
  }
  return panel;
}

PairDistances::PairDistances(const StationSet& stations) : station_count_(stations.size()) {
  const std::size_t n = stations.size();
  pairs_.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs_.push_back({i, j, stations.distance(i, j)});
  }
  std::stable_sort(pairs_.begin(), pairs_.end(),
                   [](const Pair& a, const Pair& b) { return a.distance_km < b.distance_km; });
}

std::vector<std::optional<double>> pair_half_squared_differences(
    const StandardizedErrorPanel& panel, const PairDistances& pairs) {
  if (panel.station_count != pairs.station_count()) {
    throw std::invalid_argument("panel and station pairs disagree on station count");
  }
  std::vector<std::optional<double>> out(pairs.pairs().size());
  const std::size_t n_days = panel.days.size();
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto& pr = pairs.pairs()[p];
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < n_days; ++k) {
      const auto a = panel.at(k, pr.i);
      const auto b = panel.at(k, pr.j);
      if (!a || !b) continue;
      sum += 0.5 * (*a - *b) * (*a - *b);
      ++n;
    }
    if (n > 0) out[p] = sum / static_cast<double>(n);
  }
  return out;
}

EmpiricalVariogram bin_pair_values(std::span<const std::optional<double>> values,
                                   const PairDistances& pairs, std::size_t bin_count) {
  if (values.size() != pairs.pairs().size()) {
    throw std::invalid_argument("bin_pair_values: one value per station pair expected");
  }
  std::vector<std::size_t> used;
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (values[p]) used.push_back(p);
  }
  EmpiricalVariogram out;
  if (used.empty()) throw std::invalid_argument("empirical_variogram: no usable station pairs");
  if (bin_count == 0) throw std::invalid_argument("empirical_variogram: bin count must be > 0");
  if (used.size() < bin_count) {
    out.warnings.push_back("empirical_variogram: only " + std::to_string(used.size()) +
                           " pairs, reducing bin count from " + std::to_string(bin_count));
    bin_count = used.size();
  }
  const std::size_t total = used.size();
  for (std::size_t l = 0; l < bin_count; ++l) {
    const std::size_t lo = l * total / bin_count;
    const std::size_t hi = (l + 1) * total / bin_count;
    VariogramBin bin;
    for (std::size_t k = lo; k < hi; ++k) {
      bin.distance_km += pairs.pairs()[used[k]].distance_km;
      bin.gamma += *values[used[k]];
    }
    bin.pairs = hi - lo;
    bin.distance_km /= static_cast<double>(bin.pairs);
    bin.gamma /= static_cast<double>(bin.pairs);
    out.bins.push_back(bin);
  }
  out.pairs_used = total;
  return out;
}

EmpiricalVariogram empirical_variogram(const StandardizedErrorPanel& panel,
                                       const PairDistances& pairs, std::size_t bin_count) {
  if (panel.station_count < 2 || panel.days.empty()) {
    throw std::invalid_argument("empirical_variogram: need >= 2 stations and >= 1 day");
  }
  return bin_pair_values(pair_half_squared_differences(panel, pairs), pairs, bin_count);
}

EmpiricalVariogram empirical_variogram(const StandardizedErrorPanel& panel,
                                       const StationSet& stations, std::size_t bin_count) {
  return empirical_variogram(panel, PairDistances(stations), bin_count);
}

double variogram_model(double theta, double range_km, double distance_km, bool same_site) {
  if (same_site) return 0.0;
  return (1.0 - theta) * (1.0 - std::exp(-distance_km / range_km)) + theta;
}

double correlation_model(double theta, double range_km, double distance_km, bool same_site) {
  return (1.0 - theta) * std::exp(-distance_km / range_km) + (same_site ? theta : 0.0);
}

double variogram_objective(std::span<const VariogramBin> bins, double theta, double range_km) {
  double s = 0.0;
  for (const auto& b : bins) {
    const double g = variogram_model(theta, range_km, b.distance_km, false);
    const double rel = (b.gamma - g) / g;
    s += static_cast<double>(b.pairs) * rel * rel;
  }
  return s;
}

VariogramFit fit_variogram(std::span<const VariogramBin> bins, double r_max,
                           std::optional<VariogramStart> start) {
  if (!(r_max > 0.0)) throw std::invalid_argument("fit_variogram: r_max must be positive");
  VariogramFit fit;
  fit.bins.assign(bins.begin(), bins.end());
  const auto positive = std::count_if(bins.begin(), bins.end(),
                                      [](const VariogramBin& b) { return b.gamma > 0.0; });
  if (!bins.empty() && positive == 0) {
    fit.theta = 0.0;
    fit.range_km = r_max;
    fit.degenerate = true;
    fit.objective = 0.0;
    fit.warnings.push_back("fit_variogram: all empirical values are zero");
    return fit;
  }
  if (positive < 2) throw std::invalid_argument("fit_variogram: need >= 2 bins with gamma > 0");

  VariogramStart s0 = start.value_or(VariogramStart{0.1, r_max / 8.0});
  if (s0.range_km <= 0.0) s0.range_km = r_max / 8.0;
  const double theta0 = std::clamp(s0.theta, 1e-6, 1.0 - 1e-6);
  const double rho0 = std::clamp(s0.range_km / r_max, 1e-6, 1.0 - 1e-6);

  // theta = logistic(u), r = r_max * logistic(v).
  const Objective objective = [&](std::span<const double> x, std::span<double> g) {
    const double theta = logistic(x[0]);
    const double rho = logistic(x[1]);
    const double r = r_max * rho;
    std::fill(g.begin(), g.end(), 0.0);
    double total = 0.0;
    for (const auto& b : bins) {
      const double e = std::exp(-b.distance_km / r);
      const double model = (1.0 - theta) * (1.0 - e) + theta;
      const double rel = (b.gamma - model) / model;
      const double n = static_cast<double>(b.pairs);
      total += n * rel * rel;
      if (g.empty()) continue;
      const double d_model = n * 2.0 * rel * (-b.gamma / (model * model));
      const double d_theta = e;
      const double d_r = -(1.0 - theta) * e * b.distance_km / (r * r);
      g[0] += d_model * d_theta * theta * (1.0 - theta);
      g[1] += d_model * d_r * r_max * rho * (1.0 - rho);
    }
    return total;
  };
  MinimizeOptions opts;
  opts.max_iterations = 500;
  opts.gradient_tolerance = 1e-10;
  const auto res = minimize_bfgs(objective, Eigen::Vector2d(logit(theta0), logit(rho0)), opts);
  fit.theta = logistic(res.x[0]);
  fit.range_km = r_max * logistic(res.x[1]);
  // A range far below the shortest binned distance is indistinguishable from
  // a pure nugget at every bin.
  double d_min = bins.front().distance_km;
  for (const auto& b : bins) d_min = std::min(d_min, b.distance_km);
  if ((1.0 - fit.theta) * std::exp(-d_min / fit.range_km) < 1e-9) {
    fit.theta = 1.0;
    fit.warnings.push_back("fit_variogram: range below the shortest bin distance, pure nugget");
  }
  fit.objective = variogram_objective(bins, fit.theta, fit.range_km);
  fit.converged = res.converged;
  if (!res.converged) fit.warnings.push_back("fit_variogram: optimizer did not converge");
  return fit;
}

Eigen::MatrixXd build_correlation_matrix(double theta, double range_km,
                                         const StationSet& stations) {
  const auto n = static_cast<Eigen::Index>(stations.size());
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = correlation_model(
          theta, range_km,
          stations.distance(static_cast<std::size_t>(i), static_cast<std::size_t>(j)), false);
      p(i, j) = c;
      p(j, i) = c;
    }
  }
  return p;
}

Eigen::MatrixXd build_correlation_matrix(const VariogramFit& fit, const StationSet& stations) {
  return build_correlation_matrix(fit.theta, fit.range_km, stations);
}

MultivariatePredictive build_spatial_ngr(std::vector<std::string> station_order,
                                         const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
                                         const Eigen::MatrixXd& correlation) {
  const auto n = static_cast<Eigen::Index>(station_order.size());
  if (mu.size() != n || sigma.size() != n || correlation.rows() != n ||
      correlation.cols() != n) {
    throw std::invalid_argument("build_spatial_ngr: dimension mismatch");
  }
  return MultivariatePredictive(std::move(station_order), mu, sigma, correlation);
}

CorrelatedSampler::CorrelatedSampler(const Eigen::MatrixXd& correlation) {
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd a = correlation;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
      lower_ = llt.matrixL();
      jitter_ = jitter;
      return;
    }
    if (jitter >= 1e-6) break;
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
  }
  throw std::runtime_error("CorrelatedSampler: factorization failed at maximum jitter");
}

Eigen::MatrixXd CorrelatedSampler::draw(std::size_t n, RandomStream& rng) const {
  const Eigen::Index d = lower_.rows();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) z(i, k) = rng.normal();
  }
  return z * lower_.transpose();
}

ForecastFieldSample sample_fields(const MultivariatePredictive& pred, std::size_t n_samples,
                                  RandomStream& rng) {
  const CorrelatedSampler sampler(pred.correlation());
  ForecastFieldSample out;
  out.station_order = pred.station_order();
  out.provenance = Provenance::kGrfSpatial;
  out.seed = rng.seed();
  out.fields = sampler.draw(n_samples, rng) * pred.scale().asDiagonal();
  out.fields.rowwise() += pred.mu().transpose();
  return out;
}

}  // namespace fieldcast
