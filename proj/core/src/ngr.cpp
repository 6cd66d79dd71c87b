#include "fieldcast/ngr.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "fieldcast/distributions.hpp"
#include "fieldcast/optimize.hpp"

namespace fieldcast {
namespace {

struct TrainingRow {
  std::size_t station = 0;
  double y = 0.0;
  std::vector<double> f;
  double s2 = 0.0;
};

std::vector<TrainingRow> collect_rows(const EnsembleDataset& data,
                                      std::span<const std::size_t> days) {
  std::vector<TrainingRow> rows;
  for (std::size_t d : days) {
    for (std::size_t s = 0; s < data.station_count(); ++s) {
      const auto y = data.observation(d, s);
      if (!y) continue;
      auto summary = summarize_members(data.member_values(d, s));
      if (!summary) continue;
      rows.push_back({s, *y, std::move(summary->values), summary->variance});
    }
  }
  return rows;
}

void check_finite(const GaussianPredictive& dist, double y) {
  if (!std::isfinite(y) || !std::isfinite(dist.mean()) || !std::isfinite(dist.variance())) {
    throw std::domain_error("crps_gaussian: non-finite input");
  }
}

constexpr double kInvSqrtPi = std::numbers::inv_sqrtpi;

}  // namespace

double crps_gaussian(const GaussianPredictive& dist, double y) {
  check_finite(dist, y);
  const double sigma = dist.sd();
  const double z = (y - dist.mean()) / sigma;
  return sigma * (z * (2.0 * gaussian_cdf(z) - 1.0) + 2.0 * gaussian_pdf(z) - kInvSqrtPi);
}

CrpsGradient crps_gaussian_gradient(const GaussianPredictive& dist, double y) {
  check_finite(dist, y);
  const double z = (y - dist.mean()) / dist.sd();
  return {-(2.0 * gaussian_cdf(z) - 1.0), 2.0 * gaussian_pdf(z) - kInvSqrtPi};
}

std::optional<MemberSummary> summarize_members(std::span<const std::optional<double>> members) {
  MemberSummary out;
  double sum = 0.0;
  for (const auto& v : members) {
    if (v) {
      sum += *v;
      ++out.available;
    }
  }
  if (out.available == 0) return std::nullopt;
  out.mean = sum / out.available;
  double ss = 0.0;
  out.values.reserve(members.size());
  for (const auto& v : members) {
    out.values.push_back(v ? *v : out.mean);
    if (v) ss += (*v - out.mean) * (*v - out.mean);
  }
  out.variance = out.available > 1 ? ss / (out.available - 1) : 0.0;
  return out;
}

NgrPlusParams NgrPlusParams::default_start(int members) {
  NgrPlusParams p;
  p.a = 0.0;
  p.beta.assign(static_cast<std::size_t>(members), std::sqrt(1.0 / members));
  p.c_raw = 1.0;
  p.d_raw = 1.0;
  return p;
}

GaussianPredictive predict_ngr_plus(const NgrPlusParams& params, std::span<const double> forecasts,
                                    double ensemble_variance) {
  if (forecasts.size() != params.beta.size()) {
    throw std::invalid_argument("predict_ngr_plus: member count mismatch");
  }
  double mu = params.a;
  for (std::size_t m = 0; m < forecasts.size(); ++m) mu += params.b(m) * forecasts[m];
  return {mu, params.c() + params.d() * ensemble_variance};
}

namespace {

// x = [a, beta_1..beta_M, c_raw, d_raw]
double ngr_plus_objective(const std::vector<TrainingRow>& rows, std::size_t members,
                          std::span<const double> x, std::span<double> grad) {
  const double a = x[0];
  const double c_raw = x[members + 1];
  const double d_raw = x[members + 2];
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (const auto& r : rows) {
    double mu = a;
    for (std::size_t m = 0; m < members; ++m) mu += x[m + 1] * x[m + 1] * r.f[m];
    double var = c_raw * c_raw + d_raw * d_raw * r.s2;
    const bool floored = var < kVarianceFloor;
    if (floored) var = kVarianceFloor;
    const double sigma = std::sqrt(var);
    const double z = (r.y - mu) / sigma;
    const double cdf = gaussian_cdf(z);
    const double pdf = gaussian_pdf(z);
    total += sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - kInvSqrtPi);
    if (grad.empty()) continue;
    const double d_mu = -(2.0 * cdf - 1.0);
    const double d_sigma = 2.0 * pdf - kInvSqrtPi;
    grad[0] += d_mu;
    for (std::size_t m = 0; m < members; ++m) grad[m + 1] += d_mu * 2.0 * x[m + 1] * r.f[m];
    if (!floored) {
      grad[members + 1] += d_sigma * c_raw / sigma;
      grad[members + 2] += d_sigma * d_raw * r.s2 / sigma;
    }
  }
  const double n = static_cast<double>(rows.size());
  for (double& g : grad) g /= n;
  return total / n;
}

}  // namespace

NgrPlusFit fit_ngr_plus(const EnsembleDataset& data, const TrainingWindow& window,
                        const std::optional<NgrPlusParams>& init, const NgrFitOptions& options) {
  if (window.training_days.empty()) throw EstimationError("fit_ngr_plus: empty training window");
  const auto members = static_cast<std::size_t>(data.members());
  const auto rows = collect_rows(data, window.training_days);
  if (rows.empty()) throw EstimationError("fit_ngr_plus: no observations in training window");
  if (rows.size() < members + 3) {
    throw EstimationError("fit_ngr_plus: fewer than M + 3 observed station-days");
  }
  const NgrPlusParams start = init.value_or(NgrPlusParams::default_start(data.members()));
  if (start.beta.size() != members) {
    throw std::invalid_argument("fit_ngr_plus: initial beta has wrong length");
  }
  Eigen::VectorXd x0(static_cast<Eigen::Index>(members + 3));
  x0[0] = start.a;
  for (std::size_t m = 0; m < members; ++m) x0[static_cast<Eigen::Index>(m + 1)] = start.beta[m];
  x0[static_cast<Eigen::Index>(members + 1)] = start.c_raw;
  x0[static_cast<Eigen::Index>(members + 2)] = start.d_raw;

  const Objective objective = [&](std::span<const double> x, std::span<double> g) {
    return ngr_plus_objective(rows, members, x, g);
  };
  MinimizeOptions mopts;
  mopts.max_iterations = options.max_iterations;
  mopts.gradient_tolerance = options.gradient_tolerance;
  const auto res = minimize_bfgs(objective, x0, mopts);

  NgrPlusFit fit;
  fit.params.a = res.x[0];
  fit.params.beta.resize(members);
  for (std::size_t m = 0; m < members; ++m) {
    fit.params.beta[m] = res.x[static_cast<Eigen::Index>(m + 1)];
  }
  fit.params.c_raw = res.x[static_cast<Eigen::Index>(members + 1)];
  fit.params.d_raw = res.x[static_cast<Eigen::Index>(members + 2)];
  auto& diag = fit.diagnostics;
  diag.objective = res.value;
  diag.initial_objective = res.initial_value;
  diag.gradient_norm = res.gradient_norm;
  diag.iterations = res.iterations;
  diag.converged = res.converged && res.gradient_norm <= 1e-6;
  diag.rows = rows.size();
  if (!diag.converged) {
    diag.warnings.push_back("fit_ngr_plus: optimizer stopped with gradient norm " +
                            std::to_string(res.gradient_norm));
  }
  return fit;
}

double mean_crps_ngr_plus(const NgrPlusParams& params, const EnsembleDataset& data,
                          std::span<const std::size_t> days) {
  const auto rows = collect_rows(data, days);
  if (rows.empty()) throw EstimationError("mean_crps_ngr_plus: no observed station-days");
  double total = 0.0;
  for (const auto& r : rows) total += crps_gaussian(predict_ngr_plus(params, r.f, r.s2), r.y);
  return total / static_cast<double>(rows.size());
}

GaussianPredictive predict_ngr_c(const NgrCParams& params, const StationClimatology& clim,
                                 std::span<const double> forecasts, double ensemble_variance) {
  if (forecasts.size() != params.b.size() || clim.fbar.size() != params.b.size()) {
    throw std::invalid_argument("predict_ngr_c: member count mismatch");
  }
  double mu = clim.ybar;
  for (std::size_t m = 0; m < forecasts.size(); ++m) {
    mu += params.b[m] * (forecasts[m] - clim.fbar[m]);
  }
  return {mu, params.c() * clim.xi2 + params.d() * ensemble_variance};
}

GaussianPredictive predict_ngr_c(const NgrCParams& params, std::string_view station_id,
                                 std::span<const double> forecasts, double ensemble_variance) {
  const auto it = params.climatology.find(std::string(station_id));
  if (it == params.climatology.end()) {
    throw std::out_of_range("predict_ngr_c: no climatology for station '" +
                            std::string(station_id) + "'");
  }
  return predict_ngr_c(params, it->second, forecasts, ensemble_variance);
}

NgrCFit fit_ngr_c(const EnsembleDataset& data, const TrainingWindow& window,
                  const NgrCOptions& options) {
  if (window.training_days.empty()) throw EstimationError("fit_ngr_c: empty training window");
  const auto members = static_cast<std::size_t>(data.members());
  const auto all_rows = collect_rows(data, window.training_days);
  if (all_rows.empty()) throw EstimationError("fit_ngr_c: no observations in training window");

  NgrCFit fit;
  auto& diag = fit.diagnostics;

  // Per-station climatology over the station's observed training days.
  const std::size_t ns = data.station_count();
  std::vector<std::size_t> count(ns, 0);
  for (const auto& r : all_rows) ++count[r.station];
  std::vector<StationClimatology> clim(ns);
  for (std::size_t s = 0; s < ns; ++s) clim[s].fbar.assign(members, 0.0);
  for (const auto& r : all_rows) {
    auto& c = clim[r.station];
    c.ybar += r.y;
    for (std::size_t m = 0; m < members; ++m) c.fbar[m] += r.f[m];
  }
  std::size_t skipped = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    if (count[s] == 0) continue;
    if (count[s] < options.min_station_observations) {
      ++skipped;
      continue;
    }
    const double n = static_cast<double>(count[s]);
    clim[s].ybar /= n;
    for (double& f : clim[s].fbar) f /= n;
    clim[s].n_obs = count[s];
  }
  if (skipped > 0) {
    diag.warnings.push_back("fit_ngr_c: " + std::to_string(skipped) +
                            " station(s) with too few training observations skipped");
  }

  std::vector<const TrainingRow*> rows;
  for (const auto& r : all_rows) {
    if (clim[r.station].n_obs > 0) rows.push_back(&r);
  }
  if (rows.empty()) throw EstimationError("fit_ngr_c: no station has enough observations");

  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_mem = static_cast<Eigen::Index>(members);
  Eigen::MatrixXd x(n_rows, n_mem);
  Eigen::VectorXd target(n_rows);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const auto& r = *rows[static_cast<std::size_t>(i)];
    const auto& c = clim[r.station];
    target[i] = r.y - c.ybar;
    for (Eigen::Index m = 0; m < n_mem; ++m) {
      x(i, m) = r.f[static_cast<std::size_t>(m)] - c.fbar[static_cast<std::size_t>(m)];
    }
  }
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * target;
  double ridge = options.ridge.value_or(1e-4 * static_cast<double>(n_rows));
  if (ridge < 0.0) throw std::invalid_argument("fit_ngr_c: ridge must be non-negative");
  auto solve = [&](double penalty) {
    Eigen::MatrixXd a = xtx;
    a.diagonal().array() += penalty;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    const double scale = std::max(a.diagonal().maxCoeff(), 1.0);
    const bool ok = llt.info() == Eigen::Success && llt.rcond() > 1e-13 &&
                    a.diagonal().minCoeff() > 1e-14 * scale;
    return std::make_pair(ok, ok ? Eigen::VectorXd(llt.solve(xty)) : Eigen::VectorXd());
  };
  auto [ok, b] = solve(ridge);
  if (!ok) {
    if (ridge == 0.0) {
      ridge = 1e-6;
      diag.warnings.push_back("fit_ngr_c: singular normal equations, using ridge 1e-6");
      std::tie(ok, b) = solve(ridge);
    }
    if (!ok) throw EstimationError("fit_ngr_c: normal equations are singular");
  }
  fit.ridge = ridge;
  fit.params.b.assign(b.data(), b.data() + b.size());

  const Eigen::VectorXd resid = target - x * b;
  std::vector<double> ssr(ns, 0.0);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    ssr[rows[static_cast<std::size_t>(i)]->station] += resid[i] * resid[i];
  }
  for (std::size_t s = 0; s < ns; ++s) {
    if (clim[s].n_obs == 0) continue;
    clim[s].xi2 = ssr[s] / static_cast<double>(clim[s].n_obs);
    fit.total_squared_residual += ssr[s];
    fit.params.climatology.emplace(data.stations()[s].id, clim[s]);
  }

  // Step two: (c_raw, d_raw) by mean-CRPS minimization with the mean fixed.
  std::vector<double> mu(rows.size());
  std::vector<double> xi2(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    mu[i] = target[static_cast<Eigen::Index>(i)] - resid[static_cast<Eigen::Index>(i)] +
            clim[rows[i]->station].ybar;
    xi2[i] = clim[rows[i]->station].xi2;
  }
  const Objective objective = [&](std::span<const double> p, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double var = p[0] * p[0] * xi2[i] + p[1] * p[1] * rows[i]->s2;
      const bool floored = var < kVarianceFloor;
      if (floored) var = kVarianceFloor;
      const double sigma = std::sqrt(var);
      const double z = (rows[i]->y - mu[i]) / sigma;
      const double cdf = gaussian_cdf(z);
      const double pdf = gaussian_pdf(z);
      total += sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - kInvSqrtPi);
      if (g.empty() || floored) continue;
      const double d_sigma = 2.0 * pdf - kInvSqrtPi;
      g[0] += d_sigma * p[0] * xi2[i] / sigma;
      g[1] += d_sigma * p[1] * rows[i]->s2 / sigma;
    }
    const double n = static_cast<double>(rows.size());
    for (double& v : g) v /= n;
    return total / n;
  };
  MinimizeOptions mopts;
  mopts.max_iterations = options.fit.max_iterations;
  mopts.gradient_tolerance = options.fit.gradient_tolerance;
  const auto res =
      minimize_bfgs(objective, Eigen::Vector2d(options.c_raw_start, options.d_raw_start), mopts);
  fit.params.c_raw = res.x[0];
  fit.params.d_raw = res.x[1];
  diag.objective = res.value;
  diag.initial_objective = res.initial_value;
  diag.gradient_norm = res.gradient_norm;
  diag.iterations = res.iterations;
  diag.converged = res.converged && res.gradient_norm <= 1e-6;
  diag.rows = rows.size();
  if (!diag.converged) {
    diag.warnings.push_back("fit_ngr_c: optimizer stopped with gradient norm " +
                            std::to_string(res.gradient_norm));
  }
  return fit;
}

StationClimatology interpolate_ngr_c(const NgrCParams& params, const Station& target,
                                     const StationSet& stations, double power) {
  struct Source {
    const StationClimatology* clim;
    double dist;
  };
  std::vector<Source> sources;
  for (const auto& [id, clim] : params.climatology) {
    const auto idx = stations.index_of(id);
    if (!idx) continue;
    sources.push_back({&clim, distance_km(stations[*idx], target)});
  }
  if (sources.empty()) throw std::invalid_argument("interpolate_ngr_c: no source stations");
  for (const auto& s : sources) {
    if (s.dist == 0.0) return *s.clim;
  }
  const std::size_t members = params.b.size();
  StationClimatology out;
  out.fbar.assign(members, 0.0);
  double wsum = 0.0;
  for (const auto& s : sources) {
    const double w = 1.0 / std::pow(s.dist, power);
    wsum += w;
    out.ybar += w * s.clim->ybar;
    out.xi2 += w * s.clim->xi2;
    for (std::size_t m = 0; m < members; ++m) out.fbar[m] += w * s.clim->fbar[m];
  }
  out.ybar /= wsum;
  out.xi2 /= wsum;
  for (double& f : out.fbar) f /= wsum;
  return out;
}

}  // namespace fieldcast
