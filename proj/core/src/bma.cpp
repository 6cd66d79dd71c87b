#include "fieldcast/bma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "fieldcast/ngr.hpp"

namespace fieldcast {
namespace {

struct Row {
  std::size_t day;
  std::size_t station;
  double y;
  std::vector<double> f;
};

std::vector<Row> collect_rows(const EnsembleDataset& data, const TrainingWindow& window) {
  std::vector<Row> rows;
  for (std::size_t d : window.training_days) {
    for (std::size_t s = 0; s < data.station_count(); ++s) {
      const auto y = data.observation(d, s);
      if (!y) continue;
      auto summary = summarize_members(data.member_values(d, s));
      if (!summary) continue;
      rows.push_back({d, s, *y, std::move(summary->values)});
    }
  }
  return rows;
}

double log_normal_density(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + z * z / var);
}

}  // namespace

BmaFit fit_bma(const EnsembleDataset& data, const TrainingWindow& window,
               const BmaFitOptions& options) {
  if (window.training_days.empty()) throw EstimationError("fit_bma: empty training window");
  const auto rows = collect_rows(data, window);
  if (rows.empty()) throw EstimationError("fit_bma: no observations in training window");
  const std::size_t members = static_cast<std::size_t>(data.members());
  const std::size_t n = rows.size();
  const double nd = static_cast<double>(n);

  BmaFit fit;
  auto& p = fit.params;
  p.members.resize(members);

  double ybar = 0.0;
  for (const auto& r : rows) ybar += r.y;
  ybar /= nd;

  // Member-wise ordinary least squares of y on f_m.
  std::vector<std::vector<double>> mu(members, std::vector<double>(n));
  double pooled = 0.0;
  for (std::size_t m = 0; m < members; ++m) {
    double fbar = 0.0;
    for (const auto& r : rows) fbar += r.f[m];
    fbar /= nd;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& r : rows) {
      sxx += (r.f[m] - fbar) * (r.f[m] - fbar);
      sxy += (r.f[m] - fbar) * (r.y - ybar);
    }
    auto& mem = p.members[m];
    if (sxx <= 1e-12 * std::max(1.0, fbar * fbar) * nd) {
      mem.b = 0.0;
      mem.a = ybar;
      fit.warnings.push_back("fit_bma: member " + std::to_string(m + 1) +
                             " has constant forecasts");
    } else {
      mem.b = sxy / sxx;
      mem.a = ybar - mem.b * fbar;
    }
    for (std::size_t i = 0; i < n; ++i) {
      mu[m][i] = mem.a + mem.b * rows[i].f[m];
      pooled += (rows[i].y - mu[m][i]) * (rows[i].y - mu[m][i]);
    }
  }

  std::vector<double> w(members, 1.0 / static_cast<double>(members));
  double sigma2 = std::max(pooled / (nd * static_cast<double>(members)), kVarianceFloor);
  std::vector<double> logp(members);
  std::vector<double> resp_sum(members);

  auto log_likelihood = [&](double s2, std::vector<std::vector<double>>* resp) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < members; ++m) {
        logp[m] = w[m] > 0.0 ? std::log(w[m]) + log_normal_density(rows[i].y, mu[m][i], s2)
                             : -std::numeric_limits<double>::infinity();
        mx = std::max(mx, logp[m]);
      }
      double sum = 0.0;
      for (std::size_t m = 0; m < members; ++m) sum += std::exp(logp[m] - mx);
      ll += mx + std::log(sum);
      if (resp != nullptr) {
        for (std::size_t m = 0; m < members; ++m) (*resp)[m][i] = std::exp(logp[m] - mx) / sum;
      }
    }
    return ll;
  };

  std::vector<std::vector<double>> resp(members, std::vector<double>(n));
  double ll = log_likelihood(sigma2, &resp);
  fit.log_likelihood.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    // M-step: weights are mean responsibilities, sigma^2 the
    // responsibility-weighted mean squared residual.
    double ss = 0.0;
    for (std::size_t m = 0; m < members; ++m) {
      double rs = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rs += resp[m][i];
        const double e = rows[i].y - mu[m][i];
        ss += resp[m][i] * e * e;
      }
      resp_sum[m] = rs;
    }
    for (std::size_t m = 0; m < members; ++m) w[m] = resp_sum[m] / nd;
    sigma2 = std::max(ss / nd, kVarianceFloor);
    // E-step.
    const double next = log_likelihood(sigma2, &resp);
    fit.iterations = it + 1;
    if (next < ll - 1e-9 * std::max(1.0, std::abs(ll))) {
      throw std::logic_error("fit_bma: EM log-likelihood decreased");
    }
    fit.log_likelihood.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (gain < options.em_tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) fit.warnings.push_back("fit_bma: EM reached the iteration limit");

  // Normalize exactly so the weights sum to one within rounding.
  double wsum = 0.0;
  for (double v : w) wsum += v;
  for (std::size_t m = 0; m < members; ++m) p.members[m].weight = w[m] / wsum;
  p.sigma2 = sigma2;
  return fit;
}

MixturePredictive predict_bma(const BmaParams& params, std::span<const double> forecasts) {
  if (forecasts.size() != params.members.size()) {
    throw std::invalid_argument("predict_bma: member count mismatch");
  }
  std::vector<MixtureComponent> comps;
  comps.reserve(forecasts.size());
  for (std::size_t m = 0; m < forecasts.size(); ++m) {
    const auto& mem = params.members[m];
    comps.push_back({mem.weight, mem.a + mem.b * forecasts[m], params.sigma2});
  }
  return MixturePredictive(std::move(comps));
}

SpatialBmaFit fit_spatial_bma(const EnsembleDataset& data, const TrainingWindow& window,
                              const BmaParams& bma, std::size_t bins) {
  const std::size_t members = bma.members.size();
  if (members != static_cast<std::size_t>(data.members())) {
    throw std::invalid_argument("fit_spatial_bma: BMA member count does not match data");
  }
  const PairDistances pairs(data.stations());
  const double r_max = pairs.max_distance();
  SpatialBmaFit out;
  out.params.bma = bma;
  std::vector<std::vector<std::optional<double>>> pair_values(members);
  std::vector<bool> failed(members, false);
  for (std::size_t m = 0; m < members; ++m) {
    const auto& mem = bma.members[m];
    const auto panel = standardize_errors(
        data, window, [&](std::size_t d, std::size_t s) -> std::optional<GaussianPredictive> {
          auto summary = summarize_members(data.member_values(d, s));
          if (!summary) return std::nullopt;
          return GaussianPredictive(mem.a + mem.b * summary->values[m], bma.sigma2);
        });
    pair_values[m] = pair_half_squared_differences(panel, pairs);
    try {
      const auto emp = bin_pair_values(pair_values[m], pairs, bins);
      auto fit = fit_variogram(emp.bins, r_max);
      if (fit.degenerate) {
        failed[m] = true;
      } else {
        out.params.member_fits.push_back(std::move(fit));
        continue;
      }
    } catch (const std::invalid_argument&) {
      failed[m] = true;
    }
    out.params.member_fits.emplace_back();
  }
  if (std::find(failed.begin(), failed.end(), true) != failed.end()) {
    // Pool pair values over members for the fallback fit.
    std::vector<std::optional<double>> pooled(pairs.pairs().size());
    for (std::size_t p = 0; p < pooled.size(); ++p) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t m = 0; m < members; ++m) {
        if (pair_values[m][p]) {
          sum += *pair_values[m][p];
          ++n;
        }
      }
      if (n > 0) pooled[p] = sum / static_cast<double>(n);
    }
    const auto emp = bin_pair_values(pooled, pairs, bins);
    const auto pooled_fit = fit_variogram(emp.bins, r_max);
    for (std::size_t m = 0; m < members; ++m) {
      if (!failed[m]) continue;
      out.params.member_fits[m] = pooled_fit;
      out.warnings.push_back("fit_spatial_bma: member " + std::to_string(m + 1) +
                             " uses the pooled-member variogram");
    }
  }
  return out;
}

ForecastFieldSample sample_spatial_bma(const SpatialBmaParams& params,
                                       const Eigen::MatrixXd& forecasts,
                                       const StationSet& stations, std::size_t n_samples,
                                       RandomStream& rng) {
  const std::size_t members = params.bma.members.size();
  const auto ns = static_cast<Eigen::Index>(stations.size());
  if (forecasts.rows() != ns || forecasts.cols() != static_cast<Eigen::Index>(members) ||
      params.member_fits.size() != members) {
    throw std::invalid_argument("sample_spatial_bma: dimension mismatch");
  }
  ForecastFieldSample out;
  out.station_order = stations.ids();
  out.provenance = Provenance::kSpatialBma;
  out.seed = rng.seed();
  out.fields.resize(static_cast<Eigen::Index>(n_samples), ns);
  if (n_samples == 0) return out;

  std::vector<std::unique_ptr<CorrelatedSampler>> samplers(members);
  const double sigma = std::sqrt(params.bma.sigma2);
  Eigen::VectorXd z(ns);
  for (std::size_t i = 0; i < n_samples; ++i) {
    double u = rng.uniform();
    std::size_t m = members - 1;
    for (std::size_t k = 0; k < members; ++k) {
      if (u < params.bma.members[k].weight) {
        m = k;
        break;
      }
      u -= params.bma.members[k].weight;
    }
    if (params.bma.members[m].weight <= 0.0) {
      // Rounding pushed the draw past the last positive weight.
      for (std::size_t k = members; k-- > 0;) {
        if (params.bma.members[k].weight > 0.0) {
          m = k;
          break;
        }
      }
    }
    if (!samplers[m]) {
      samplers[m] = std::make_unique<CorrelatedSampler>(
          build_correlation_matrix(params.member_fits[m], stations));
    }
    for (Eigen::Index k = 0; k < ns; ++k) z[k] = rng.normal();
    const auto& mem = params.bma.members[m];
    const auto row = static_cast<Eigen::Index>(i);
    out.fields.row(row) =
        ((mem.a + mem.b * forecasts.col(static_cast<Eigen::Index>(m)).array()).matrix() +
         sigma * (samplers[m]->lower() * z))
            .transpose();
  }
  return out;
}

}  // namespace fieldcast
