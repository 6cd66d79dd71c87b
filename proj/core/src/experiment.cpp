#include "fieldcast/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "fieldcast/csv.hpp"
#include "fieldcast/ecc.hpp"
#include "fieldcast/ingest.hpp"
#include "fieldcast/spatial.hpp"

namespace fieldcast {
namespace {

constexpr std::string_view kAllRegion = "all";
constexpr std::size_t kPitBins = 20;

std::vector<std::string> station_ids_of(const EnsembleDataset& data,
                                        std::span<const std::size_t> stations) {
  std::vector<std::string> ids;
  ids.reserve(stations.size());
  for (std::size_t s : stations) ids.push_back(data.stations()[s].id);
  return ids;
}

const StationClimatology* climatology_of(const NgrCParams& p, const std::string& id) {
  const auto it = p.climatology.find(id);
  return it == p.climatology.end() ? nullptr : &it->second;
}

std::optional<GaussianPredictive> gaussian_at(const ModelParameters& params,
                                              const EnsembleDataset& data, std::size_t day,
                                              std::size_t station) {
  const auto p = predictive_at(params, data, day, station);
  if (!p) return std::nullopt;
  if (const auto* g = std::get_if<GaussianPredictive>(&*p)) return *g;
  return std::nullopt;
}

VariogramFit fit_error_variogram(const EnsembleDataset& data, const TrainingWindow& window,
                                 const ModelParameters& params, std::size_t bins,
                                 const ModelParameters* warm) {
  const auto panel = standardize_errors(
      data, window, [&](std::size_t d, std::size_t s) { return gaussian_at(params, data, d, s); });
  const PairDistances pairs(data.stations());
  const auto ev = empirical_variogram(panel, pairs, bins);
  std::optional<VariogramStart> start;
  if (warm && warm->variogram && !warm->variogram->degenerate) {
    start = VariogramStart{warm->variogram->theta, warm->variogram->range_km};
    start->theta = std::clamp(start->theta, 1e-3, 1.0 - 1e-3);
    start->range_km = std::clamp(start->range_km, 1e-3 * pairs.max_distance(),
                                 (1.0 - 1e-3) * pairs.max_distance());
  }
  auto fit = fit_variogram(ev.bins, pairs.max_distance(), start);
  fit.warnings.insert(fit.warnings.begin(), ev.warnings.begin(), ev.warnings.end());
  return fit;
}

template <typename T>
T median_of(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string threshold_name(double x) { return "bs_" + csv::format_real(x); }

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kNgrPlus:
      return "ngr+";
    case Method::kNgrC:
      return "ngrc";
    case Method::kBma:
      return "bma";
  }
  return "?";
}

std::string_view to_string(SpatialMode s) {
  switch (s) {
    case SpatialMode::kNone:
      return "none";
    case SpatialMode::kGrf:
      return "grf";
    case SpatialMode::kEcc:
      return "ecc";
    case SpatialMode::kSpatialBma:
      return "spatial-bma";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "ngr+") return Method::kNgrPlus;
  if (s == "ngrc") return Method::kNgrC;
  if (s == "bma") return Method::kBma;
  throw UsageError("unknown method '" + std::string(s) + "' (expected ngr+, ngrc or bma)");
}

SpatialMode parse_spatial_mode(std::string_view s) {
  if (s == "none") return SpatialMode::kNone;
  if (s == "grf") return SpatialMode::kGrf;
  if (s == "ecc") return SpatialMode::kEcc;
  if (s == "spatial-bma") return SpatialMode::kSpatialBma;
  throw UsageError("unknown spatial mode '" + std::string(s) +
                   "' (expected none, grf, ecc or spatial-bma)");
}

bool valid_combination(Method m, SpatialMode s) {
  switch (s) {
    case SpatialMode::kNone:
    case SpatialMode::kEcc:
      return true;
    case SpatialMode::kGrf:
      return m != Method::kBma;
    case SpatialMode::kSpatialBma:
      return m == Method::kBma;
  }
  return false;
}

std::string method_label(Method m, SpatialMode s) {
  const std::string base(to_string(m));
  switch (s) {
    case SpatialMode::kNone:
      return base;
    case SpatialMode::kGrf:
      return "spatial-" + base;
    case SpatialMode::kEcc:
      return "ecc-" + base;
    case SpatialMode::kSpatialBma:
      return "spatial-bma";
  }
  return base;
}

Method method_of(const ModelParameters& params) { return parse_method(params.method); }

ModelParameters fit_day(const EnsembleDataset& data, const TrainingWindow& window, Method method,
                        SpatialMode spatial, const FitSettings& settings,
                        const ModelParameters* warm, std::vector<std::string>* warnings) {
  if (!valid_combination(method, spatial)) {
    throw UsageError("spatial mode " + std::string(to_string(spatial)) +
                     " cannot be combined with method " + std::string(to_string(method)));
  }
  ModelParameters out;
  out.method = std::string(to_string(method));
  out.target_day = data.days().at(window.target_day);
  std::vector<std::string> notes;
  switch (method) {
    case Method::kNgrPlus: {
      std::optional<NgrPlusParams> init;
      if (warm && warm->ngr_plus &&
          warm->ngr_plus->beta.size() == static_cast<std::size_t>(data.members())) {
        init = warm->ngr_plus;
      }
      auto fit = fit_ngr_plus(data, window, init, settings.ngr);
      notes = std::move(fit.diagnostics.warnings);
      out.ngr_plus = std::move(fit.params);
      break;
    }
    case Method::kNgrC: {
      auto fit = fit_ngr_c(data, window, settings.ngr_c);
      notes = std::move(fit.diagnostics.warnings);
      out.ngr_c = std::move(fit.params);
      break;
    }
    case Method::kBma: {
      auto fit = fit_bma(data, window, settings.bma);
      notes = std::move(fit.warnings);
      out.bma = std::move(fit.params);
      break;
    }
  }
  if (spatial == SpatialMode::kGrf) {
    out.variogram = fit_error_variogram(data, window, out, settings.variogram_bins, warm);
    notes.insert(notes.end(), out.variogram->warnings.begin(), out.variogram->warnings.end());
  } else if (spatial == SpatialMode::kSpatialBma) {
    auto fit = fit_spatial_bma(data, window, *out.bma, settings.variogram_bins);
    out.member_variograms = std::move(fit.params.member_fits);
    notes.insert(notes.end(), fit.warnings.begin(), fit.warnings.end());
  }
  if (warnings) {
    for (auto& n : notes) warnings->push_back(out.target_day + " " + out.method + ": " + n);
  }
  return out;
}

std::optional<UnivariatePredictive> predictive_at(const ModelParameters& params,
                                                  const EnsembleDataset& data, std::size_t day,
                                                  std::size_t station) {
  const auto summary = summarize_members(data.member_values(day, station));
  if (!summary) return std::nullopt;
  if (params.ngr_plus) {
    return predict_ngr_plus(*params.ngr_plus, summary->values, summary->variance);
  }
  if (params.ngr_c) {
    const auto& st = data.stations()[station];
    if (const auto* clim = climatology_of(*params.ngr_c, st.id)) {
      return predict_ngr_c(*params.ngr_c, *clim, summary->values, summary->variance);
    }
    const auto clim = interpolate_ngr_c(*params.ngr_c, st, data.stations());
    return predict_ngr_c(*params.ngr_c, clim, summary->values, summary->variance);
  }
  if (params.bma) return predict_bma(*params.bma, summary->values);
  throw std::invalid_argument("model parameters carry no univariate parameter set");
}

std::vector<std::string> DayForecast::station_ids(const EnsembleDataset& data) const {
  return station_ids_of(data, stations);
}

DayForecast forecast_day(const ModelParameters& params, const EnsembleDataset& data,
                         std::size_t day, std::span<const std::size_t> stations) {
  DayForecast out;
  out.day = day;
  for (std::size_t s : stations) {
    auto summary = summarize_members(data.member_values(day, s));
    if (!summary) {
      throw std::invalid_argument("no member values at station " + data.stations()[s].id +
                                  " on " + data.days()[day]);
    }
    auto pred = predictive_at(params, data, day, s);
    out.stations.push_back(s);
    out.members.push_back(std::move(*summary));
    out.predictives.push_back(std::move(*pred));
  }
  return out;
}

std::vector<std::size_t> usable_stations(const EnsembleDataset& data, std::size_t day,
                                         bool require_observation) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < data.station_count(); ++s) {
    if (require_observation && !data.observation(day, s)) continue;
    const auto v = data.member_values(day, s);
    if (std::any_of(v.begin(), v.end(), [](const auto& x) { return x.has_value(); })) {
      out.push_back(s);
    }
  }
  return out;
}

ForecastFieldSample raw_fields(const EnsembleDataset& data, std::size_t day,
                               std::span<const std::size_t> stations) {
  ForecastFieldSample out;
  out.station_order = station_ids_of(data, stations);
  out.provenance = Provenance::kRaw;
  out.fields.resize(data.members(), static_cast<Eigen::Index>(stations.size()));
  for (std::size_t c = 0; c < stations.size(); ++c) {
    const auto summary = summarize_members(data.member_values(day, stations[c]));
    if (!summary) throw std::invalid_argument("raw_fields: station without member values");
    for (int m = 0; m < data.members(); ++m) {
      out.fields(m, static_cast<Eigen::Index>(c)) = summary->values[static_cast<std::size_t>(m)];
    }
  }
  return out;
}

ForecastFieldSample sample_day(const ModelParameters& params, SpatialMode spatial,
                               const EnsembleDataset& data, const DayForecast& forecast,
                               std::size_t n, RandomStream& rng) {
  const auto ids = forecast.station_ids(data);
  const auto ns = static_cast<Eigen::Index>(forecast.stations.size());
  switch (spatial) {
    case SpatialMode::kNone: {
      ForecastFieldSample out;
      out.station_order = ids;
      out.provenance = Provenance::kIndependent;
      out.seed = rng.seed();
      out.fields.resize(static_cast<Eigen::Index>(n), ns);
      for (Eigen::Index i = 0; i < out.fields.rows(); ++i) {
        for (Eigen::Index s = 0; s < ns; ++s) {
          out.fields(i, s) = sample(forecast.predictives[static_cast<std::size_t>(s)], rng);
        }
      }
      return out;
    }
    case SpatialMode::kGrf: {
      if (!params.variogram) throw std::invalid_argument("grf sampling needs a fitted variogram");
      Eigen::VectorXd mu(ns);
      Eigen::VectorXd sd(ns);
      for (Eigen::Index s = 0; s < ns; ++s) {
        const auto* g = std::get_if<GaussianPredictive>(
            &forecast.predictives[static_cast<std::size_t>(s)]);
        if (!g) throw std::invalid_argument("grf sampling needs Gaussian predictives");
        mu[s] = g->mean();
        sd[s] = g->sd();
      }
      const auto corr = build_correlation_matrix(*params.variogram, data.stations().subset(ids));
      return sample_fields(build_spatial_ngr(ids, mu, sd, corr), n, rng);
    }
    case SpatialMode::kEcc: {
      std::vector<std::vector<double>> q;
      std::vector<RankPermutation> perms;
      RandomStream ties = rng.derive("ties");
      for (std::size_t s = 0; s < forecast.stations.size(); ++s) {
        q.push_back(ecc_quantiles(forecast.predictives[s], data.members()));
        perms.push_back(rank_permutation(forecast.members[s].values, ties));
      }
      auto out = ecc_reorder(q, perms, ids);
      out.seed = rng.seed();
      return out;
    }
    case SpatialMode::kSpatialBma: {
      if (!params.bma || params.member_variograms.size() != params.bma->members.size()) {
        throw std::invalid_argument("spatial-bma sampling needs per-member variograms");
      }
      Eigen::MatrixXd f(ns, data.members());
      for (Eigen::Index s = 0; s < ns; ++s) {
        for (int m = 0; m < data.members(); ++m) {
          f(s, m) = forecast.members[static_cast<std::size_t>(s)].values[static_cast<std::size_t>(m)];
        }
      }
      SpatialBmaParams sp{*params.bma, params.member_variograms};
      return sample_spatial_bma(sp, f, data.stations().subset(ids), n, rng);
    }
  }
  throw std::invalid_argument("unknown spatial mode");
}

ExperimentConfig experiment_config_from(const KeyValueConfig& cfg) {
  try {
    cfg.require_known({"data", "method", "spatial", "window", "crps_samples", "samples",
                       "threshold", "seed", "out", "bins", "max_days", "threads"},
                      {"region."});
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  ExperimentConfig c;
  auto positive = [&](std::string_view key, std::size_t fallback) {
    const long long v = cfg.get_integer(key, static_cast<long long>(fallback));
    if (v < 0) throw UsageError("config key '" + std::string(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  try {
    c.data_dir = cfg.get_string("data", "");
    if (cfg.contains("method")) c.methods = cfg.get_list("method");
    if (cfg.contains("spatial")) c.spatial = cfg.get_list("spatial");
    c.window = positive("window", c.window);
    c.crps_samples = positive("crps_samples", c.crps_samples);
    c.field_samples = positive("samples", c.field_samples);
    if (cfg.contains("threshold")) c.thresholds = cfg.get_double_list("threshold");
    c.seed = static_cast<std::uint64_t>(cfg.get_integer("seed", 1));
    c.out_dir = cfg.get_string("out", c.out_dir.string());
    c.variogram_bins = positive("bins", c.variogram_bins);
    c.max_target_days = positive("max_days", 0);
    c.threads = positive("threads", 0);
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& [name, ids] : cfg.with_prefix("region.")) {
    if (name == kAllRegion) throw UsageError("region name 'all' is reserved");
    c.regions.push_back({name, split_list(ids)});
    if (c.regions.back().station_ids.empty()) throw UsageError("region '" + name + "' is empty");
  }
  if (c.window < 1) throw UsageError("window must be at least 1");
  if (c.crps_samples < 1 || c.field_samples < 2) {
    throw UsageError("crps_samples must be >= 1 and samples >= 2");
  }
  if (c.variogram_bins < 2) throw UsageError("bins must be at least 2");
  return c;
}

std::vector<std::pair<Method, SpatialMode>> expand_combinations(const ExperimentConfig& config) {
  auto has_all = [](const std::vector<std::string>& v) {
    return std::find(v.begin(), v.end(), "all") != v.end();
  };
  const bool all_methods = has_all(config.methods);
  const bool all_spatial = has_all(config.spatial);
  std::vector<Method> methods;
  if (all_methods) {
    methods = {Method::kNgrPlus, Method::kNgrC, Method::kBma};
  } else {
    for (const auto& m : config.methods) methods.push_back(parse_method(m));
  }
  std::vector<SpatialMode> modes;
  if (all_spatial) {
    modes = {SpatialMode::kNone, SpatialMode::kGrf, SpatialMode::kEcc, SpatialMode::kSpatialBma};
  } else {
    for (const auto& s : config.spatial) modes.push_back(parse_spatial_mode(s));
  }
  if (methods.empty() || modes.empty()) throw UsageError("no method or spatial mode selected");
  std::vector<std::pair<Method, SpatialMode>> out;
  for (Method m : methods) {
    for (SpatialMode s : modes) {
      if (valid_combination(m, s)) {
        if (std::find(out.begin(), out.end(), std::pair{m, s}) == out.end()) out.emplace_back(m, s);
      } else if (!all_methods && !all_spatial) {
        throw UsageError("invalid combination: method " + std::string(to_string(m)) +
                         " with spatial " + std::string(to_string(s)));
      }
    }
  }
  if (out.empty()) throw UsageError("no valid method/spatial combination selected");
  return out;
}

namespace {

struct MultivariateTarget {
  std::string label;
  std::optional<Method> method;
  SpatialMode spatial = SpatialMode::kNone;
};

struct DayOutput {
  bool ok = false;
  ScoreTable scores;
  std::vector<std::string> warnings;
  std::map<std::string, Histogram> pit;
  std::map<std::string, Histogram> rank;
  std::map<std::string, Histogram> band_depth;
  // (label, station, rank) for per-station reliability.
  std::vector<std::tuple<std::string, std::size_t, int>> station_ranks;
};

struct Context {
  const ExperimentConfig& config;
  const EnsembleDataset& data;
  std::vector<Method> methods;
  std::vector<MultivariateTarget> targets;
  std::vector<TrainingWindow> windows;
  // fitted[slot][method index]
  std::vector<std::vector<std::optional<ModelParameters>>> fitted;
};

void add_histogram(std::map<std::string, Histogram>& hs, const std::string& key,
                   std::size_t bins, std::size_t bin) {
  auto it = hs.try_emplace(key, bins).first;
  it->second.add(bin);
}

// Scores of one univariate predictive at one station.
struct UnivariateScores {
  double crps;
  double abs_err;
  double sq_err;
  IntervalOutcome interval;
};

void emit_univariate(ScoreTable& t, const Date& date, const std::string& unit,
                     const std::string& label, const UnivariateScores& s,
                     std::optional<double> pit_value) {
  t.add(date, unit, label, "crps", s.crps);
  t.add(date, unit, label, "abs_err", s.abs_err);
  t.add(date, unit, label, "sq_err", s.sq_err);
  t.add(date, unit, label, "pi_width", s.interval.width);
  t.add(date, unit, label, "pi_covered", s.interval.covered ? 1.0 : 0.0);
  if (pit_value) t.add(date, unit, label, "pit", *pit_value);
}

DayOutput score_day(const Context& ctx, std::size_t slot) {
  DayOutput out;
  const auto& data = ctx.data;
  const auto& cfg = ctx.config;
  const std::size_t t = ctx.windows[slot].target_day;
  const Date& date = data.days()[t];
  const int n_mem = data.members();
  const auto mem_bins = static_cast<std::size_t>(n_mem + 1);

  const auto stations = usable_stations(data, t, true);
  if (stations.empty()) {
    out.warnings.push_back(date + ": no station with both forecasts and an observation");
    return out;
  }
  const auto ns = static_cast<Eigen::Index>(stations.size());
  Eigen::VectorXd y(ns);
  for (Eigen::Index i = 0; i < ns; ++i) y[i] = *data.observation(t, stations[static_cast<std::size_t>(i)]);

  // Univariate: raw ensemble.
  {
    RandomStream ties(cfg.seed, "ties/raw/" + date);
    for (std::size_t i = 0; i < stations.size(); ++i) {
      const auto summary = *summarize_members(data.member_values(t, stations[i]));
      const double yi = y[static_cast<Eigen::Index>(i)];
      UnivariateScores s{crps_ensemble(summary.values, yi),
                         std::abs(median_of(summary.values) - yi),
                         (summary.mean - yi) * (summary.mean - yi),
                         ensemble_range_interval(summary.values, yi)};
      emit_univariate(out.scores, date, data.stations()[stations[i]].id, "raw", s, std::nullopt);
      const int r = verification_rank(summary.values, yi, ties);
      add_histogram(out.rank, "raw", mem_bins, static_cast<std::size_t>(r - 1));
      out.station_ranks.emplace_back("raw", stations[i], r);
    }
  }

  // Univariate: postprocessed marginals.
  std::vector<DayForecast> forecasts;
  for (std::size_t k = 0; k < ctx.methods.size(); ++k) {
    const auto& params = *ctx.fitted[slot][k];
    const std::string label(to_string(ctx.methods[k]));
    forecasts.push_back(forecast_day(params, data, t, stations));
    const auto& f = forecasts.back();
    RandomStream verify_rng(cfg.seed, "verify/" + label + "/" + date);
    RandomStream ties(cfg.seed, "ties/" + label + "/" + date);
    std::vector<double> x(cfg.crps_samples);
    std::vector<double> x2(cfg.crps_samples);
    for (std::size_t i = 0; i < stations.size(); ++i) {
      const auto& pred = f.predictives[i];
      const double yi = y[static_cast<Eigen::Index>(i)];
      double crps = 0.0;
      if (const auto* g = std::get_if<GaussianPredictive>(&pred)) {
        crps = crps_gaussian(*g, yi);
      } else {
        for (auto& v : x) v = sample(pred, verify_rng);
        for (auto& v : x2) v = sample(pred, verify_rng);
        crps = crps_sample(x, x2, yi);
      }
      const double mu = mean(pred);
      UnivariateScores s{crps, std::abs(median(pred) - yi), (mu - yi) * (mu - yi),
                         interval_coverage_width(pred, yi)};
      const double p = pit(pred, yi);
      emit_univariate(out.scores, date, data.stations()[stations[i]].id, label, s, p);
      add_histogram(out.pit, label, kPitBins,
                    std::min(static_cast<std::size_t>(p * kPitBins), kPitBins - 1));
      const auto draws = discretize(pred, n_mem, verify_rng);
      const int r = verification_rank(draws, yi, ties);
      add_histogram(out.rank, label, mem_bins, static_cast<std::size_t>(r - 1));
      out.station_ranks.emplace_back(label, stations[i], r);
    }
  }

  // Regions as column sets of the day's station list.
  std::vector<std::pair<std::string, std::vector<Eigen::Index>>> regions;
  {
    std::vector<Eigen::Index> all(stations.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
    regions.emplace_back(std::string(kAllRegion), std::move(all));
    for (const auto& r : cfg.regions) {
      std::vector<Eigen::Index> cols;
      for (std::size_t i = 0; i < stations.size(); ++i) {
        const auto& id = data.stations()[stations[i]].id;
        if (std::find(r.station_ids.begin(), r.station_ids.end(), id) != r.station_ids.end()) {
          cols.push_back(static_cast<Eigen::Index>(i));
        }
      }
      if (cols.empty()) {
        out.warnings.push_back(date + ": region " + r.name + " has no observed station");
        continue;
      }
      regions.emplace_back(r.name, std::move(cols));
    }
  }

  // Multivariate.
  for (const auto& target : ctx.targets) {
    const std::string& label = target.label;
    RandomStream rng(cfg.seed, "sample/" + label + "/" + date);
    RandomStream ties(cfg.seed, "ties/" + label + "/" + date);
    ForecastFieldSample fields;
    std::optional<Moments> moments;
    const ModelParameters* params = nullptr;
    const DayForecast* f = nullptr;
    if (target.method) {
      const auto k = static_cast<std::size_t>(
          std::find(ctx.methods.begin(), ctx.methods.end(), *target.method) - ctx.methods.begin());
      params = &*ctx.fitted[slot][k];
      f = &forecasts[k];
      fields = sample_day(*params, target.spatial, data, *f, cfg.field_samples, rng);
    } else {
      fields = raw_fields(data, t, stations);
    }
    const bool ensemble_like = !target.method || target.spatial == SpatialMode::kEcc;

    // Analytic first and second moments where the law is known.
    if (target.method && target.spatial != SpatialMode::kEcc) {
      Moments m{Eigen::VectorXd(ns), Eigen::MatrixXd::Zero(ns, ns)};
      for (Eigen::Index i = 0; i < ns; ++i) {
        m.mean[i] = mean(f->predictives[static_cast<std::size_t>(i)]);
        m.covariance(i, i) = variance(f->predictives[static_cast<std::size_t>(i)]);
      }
      if (target.spatial == SpatialMode::kGrf) {
        const auto corr = build_correlation_matrix(
            *params->variogram, data.stations().subset(fields.station_order));
        const Eigen::VectorXd sd = m.covariance.diagonal().cwiseSqrt();
        m.covariance = sd.asDiagonal() * corr * sd.asDiagonal();
      } else if (target.spatial == SpatialMode::kSpatialBma) {
        const auto sub = data.stations().subset(fields.station_order);
        std::vector<MultivariateComponent> comps;
        const auto& bma = *params->bma;
        for (std::size_t k = 0; k < bma.members.size(); ++k) {
          Eigen::VectorXd mu(ns);
          for (Eigen::Index i = 0; i < ns; ++i) {
            mu[i] = bma.members[k].a +
                    bma.members[k].b * f->members[static_cast<std::size_t>(i)].values[k];
          }
          comps.push_back({bma.members[k].weight, std::move(mu),
                           bma.sigma2 * build_correlation_matrix(params->member_variograms[k], sub)});
        }
        m = mixture_moments(comps);
      }
      moments = std::move(m);
    }

    for (const auto& [region, cols] : regions) {
      const Eigen::MatrixXd x = select_columns(fields.fields, cols);
      Eigen::VectorXd yr(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) yr[static_cast<Eigen::Index>(c)] = y[cols[c]];

      double es = 0.0;
      if (ensemble_like) {
        es = energy_score_ensemble(x, yr);
      } else {
        const Eigen::Index half = x.rows() / 2;
        es = energy_score(x.topRows(half), x.middleRows(half, half), yr);
      }
      const double ee = euclidean_error(spatial_median(x).median, yr);
      std::optional<double> ds;
      try {
        if (moments) {
          Eigen::VectorXd mu(yr.size());
          Eigen::MatrixXd cov(yr.size(), yr.size());
          for (std::size_t a = 0; a < cols.size(); ++a) {
            mu[static_cast<Eigen::Index>(a)] = moments->mean[cols[a]];
            for (std::size_t b = 0; b < cols.size(); ++b) {
              cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                  moments->covariance(cols[a], cols[b]);
            }
          }
          ds = dawid_sebastiani(mu, cov, yr);
        } else {
          ds = dawid_sebastiani_sample(x, yr);
        }
      } catch (const std::runtime_error& e) {
        out.warnings.push_back(date + " " + label + " " + region + ": " + e.what());
      }
      out.scores.add(date, region, label, "es", es);
      out.scores.add(date, region, label, "ee", ee);
      out.scores.add(date, region, label, "ds", ds);

      // Composite minimum over the region.
      std::vector<double> minima(static_cast<std::size_t>(x.rows()));
      for (Eigen::Index i = 0; i < x.rows(); ++i) minima[static_cast<std::size_t>(i)] = x.row(i).minCoeff();
      const double y_min = yr.minCoeff();
      double min_mean = 0.0;
      for (double v : minima) min_mean += v;
      min_mean /= static_cast<double>(minima.size());
      out.scores.add(date, region, label, "min_crps", crps_ensemble(minima, y_min));
      out.scores.add(date, region, label, "min_err", min_mean - y_min);
      for (double thr : cfg.thresholds) {
        out.scores.add(date, region, label, threshold_name(thr),
                       brier_score(threshold_prob(minima, thr), y_min, thr));
      }

      // Band-depth rank of the observation among M fields.
      if (x.rows() >= n_mem) {
        Eigen::MatrixXd pool(n_mem + 1, x.cols());
        pool.topRows(n_mem) = x.topRows(n_mem);
        pool.row(n_mem) = yr.transpose();
        const int r = band_depth_rank(pool, n_mem, ties);
        add_histogram(out.band_depth, label + "_" + region, mem_bins,
                      static_cast<std::size_t>(r - 1));
      }
    }
  }
  out.ok = true;
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const EnsembleDataset& data) {
  const auto combos = expand_combinations(config);
  ExperimentResult result;

  std::vector<Method> methods;
  for (const auto& [m, s] : combos) {
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  std::vector<MultivariateTarget> targets{{"raw", std::nullopt, SpatialMode::kNone}};
  for (const auto& [m, s] : combos) targets.push_back({method_label(m, s), m, s});

  for (const auto& r : config.regions) {
    for (const auto& id : r.station_ids) {
      if (!data.stations().index_of(id)) {
        throw UsageError("region " + r.name + ": unknown station '" + id + "'");
      }
    }
  }

  Context ctx{config, data, methods, targets, {}, {}};
  ctx.windows = rolling_windows(data, config.window, &result.warnings);
  if (config.max_target_days > 0 && ctx.windows.size() > config.max_target_days) {
    ctx.windows.resize(config.max_target_days);
  }

  // Fits run in day order so each day can warm-start from the previous one.
  FitSettings settings;
  settings.variogram_bins = config.variogram_bins;
  ctx.fitted.resize(ctx.windows.size());
  std::vector<std::optional<ModelParameters>> last(methods.size());
  for (std::size_t slot = 0; slot < ctx.windows.size(); ++slot) {
    const auto& w = ctx.windows[slot];
    ctx.fitted[slot].resize(methods.size());
    for (std::size_t k = 0; k < methods.size(); ++k) {
      SpatialMode needed = SpatialMode::kNone;
      for (const auto& [m, s] : combos) {
        if (m == methods[k] && (s == SpatialMode::kGrf || s == SpatialMode::kSpatialBma)) needed = s;
      }
      try {
        auto p = fit_day(data, w, methods[k], needed, settings,
                         last[k] ? &*last[k] : nullptr, &result.warnings);
        last[k] = p;
        ctx.fitted[slot][k] = std::move(p);
      } catch (const std::exception& e) {
        result.warnings.push_back(data.days()[w.target_day] + " " +
                                  std::string(to_string(methods[k])) +
                                  ": estimation failed, day skipped: " + e.what());
      }
    }
  }

  std::vector<DayOutput> outputs(ctx.windows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t slot = next++; slot < ctx.windows.size(); slot = next++) {
      const bool fitted = std::all_of(ctx.fitted[slot].begin(), ctx.fitted[slot].end(),
                                      [](const auto& p) { return p.has_value(); });
      if (!fitted) continue;
      try {
        outputs[slot] = score_day(ctx, slot);
      } catch (const std::exception& e) {
        outputs[slot] = DayOutput{};
        outputs[slot].warnings.push_back(data.days()[ctx.windows[slot].target_day] +
                                         ": scoring failed, day skipped: " + e.what());
      }
    }
  };
  std::size_t n_threads = config.threads > 0 ? config.threads
                                             : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, std::max<std::size_t>(1, ctx.windows.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
  }

  // Collect in day order.
  std::map<std::string, std::vector<Histogram>> per_station;
  for (std::size_t slot = 0; slot < outputs.size(); ++slot) {
    auto& o = outputs[slot];
    const Date& date = data.days()[ctx.windows[slot].target_day];
    result.warnings.insert(result.warnings.end(), o.warnings.begin(), o.warnings.end());
    if (!o.ok) {
      result.skipped_days.push_back(date);
      continue;
    }
    result.scored_days.push_back(date);
    result.scores.append(o.scores);
    for (auto& [k, h] : o.pit) result.pit_histograms.try_emplace(k, h.bins()).first->second += h;
    for (auto& [k, h] : o.rank) result.rank_histograms.try_emplace(k, h.bins()).first->second += h;
    for (auto& [k, h] : o.band_depth) {
      result.band_depth_histograms.try_emplace(k, h.bins()).first->second += h;
    }
    for (const auto& [label, station, r] : o.station_ranks) {
      auto& hs = per_station[label];
      if (hs.empty()) hs.assign(data.station_count(), Histogram(static_cast<std::size_t>(data.members() + 1)));
      hs[station].add(static_cast<std::size_t>(r - 1));
    }
  }
  std::vector<std::string> labels{"raw"};
  for (Method m : methods) labels.emplace_back(to_string(m));
  for (const auto& label : labels) {
    const auto it = per_station.find(label);
    if (it == per_station.end()) continue;
    for (std::size_t s = 0; s < it->second.size(); ++s) {
      if (it->second[s].total == 0) continue;
      result.scores.add("all", data.stations()[s].id, label, "ri",
                        reliability_index(it->second[s]));
    }
  }

  for (std::size_t slot = 0; slot < ctx.windows.size(); ++slot) {
    for (const auto& p : ctx.fitted[slot]) {
      if (p) result.parameters.push_back(*p);
    }
  }
  return result;
}

std::string ExperimentResult::summary_json() const {
  using ojson = nlohmann::ordered_json;
  static const std::vector<std::string> univariate_names{"crps", "abs_err", "sq_err",
                                                         "pi_width", "pi_covered", "ri"};
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  // Insertion order of first appearance keeps the output stable.
  std::vector<std::string> uni_labels;
  std::map<std::string, std::map<std::string, Acc>> uni;
  std::vector<std::string> regions;
  std::map<std::string, std::vector<std::string>> region_labels;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> score_order;
  std::map<std::string, std::map<std::string, std::map<std::string, Acc>>> multi;
  for (const auto& r : scores.rows()) {
    const bool univariate =
        std::find(univariate_names.begin(), univariate_names.end(), r.score_name) !=
        univariate_names.end();
    if (univariate) {
      if (!uni.contains(r.method)) uni_labels.push_back(r.method);
      if (r.value) {
        auto& a = uni[r.method][r.score_name];
        a.sum += *r.value;
        ++a.n;
      } else {
        uni[r.method];
      }
      continue;
    }
    if (r.score_name == "pit") continue;
    if (!multi.contains(r.unit)) regions.push_back(r.unit);
    auto& by_label = multi[r.unit];
    if (!by_label.contains(r.method)) region_labels[r.unit].push_back(r.method);
    auto& by_score = by_label[r.method];
    if (!by_score.contains(r.score_name)) score_order[r.unit][r.method].push_back(r.score_name);
    auto& a = by_score[r.score_name];
    if (r.value) {
      a.sum += *r.value;
      ++a.n;
    }
  }
  auto mean_of = [](const Acc& a) -> ojson {
    if (a.n == 0) return nullptr;
    return a.sum / static_cast<double>(a.n);
  };

  ojson j;
  j["days_scored"] = scored_days.size();
  j["days_skipped"] = skipped_days;
  ojson u = ojson::object();
  for (const auto& label : uni_labels) {
    const auto& s = uni[label];
    ojson e = ojson::object();
    auto get = [&](const char* k) { return s.contains(k) ? mean_of(s.at(k)) : ojson(nullptr); };
    e["crps"] = get("crps");
    e["mae"] = get("abs_err");
    const auto mse = get("sq_err");
    e["rmse"] = mse.is_null() ? ojson(nullptr) : ojson(std::sqrt(mse.get<double>()));
    e["pi_width"] = get("pi_width");
    e["pi_coverage"] = get("pi_covered");
    e["ri"] = get("ri");
    u[label] = std::move(e);
  }
  j["univariate"] = std::move(u);
  ojson m = ojson::object();
  for (const auto& region : regions) {
    ojson rj = ojson::object();
    for (const auto& label : region_labels[region]) {
      ojson e = ojson::object();
      for (const auto& name : score_order[region][label]) {
        e[name] = mean_of(multi[region][label][name]);
      }
      rj[label] = std::move(e);
    }
    m[region] = std::move(rj);
  }
  j["multivariate"] = std::move(m);
  j["warning_count"] = warnings.size();
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

void write_experiment_outputs(const ExperimentResult& result,
                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "histograms");
  result.scores.write_csv(out_dir / "scores.csv");
  write_text_file(out_dir / "summary.json", result.summary_json());
  write_text_file(out_dir / "params.json", to_json(std::span(result.parameters)) + "\n");
  for (const auto& [k, h] : result.pit_histograms) {
    write_histogram_csv(h, out_dir / "histograms" / ("pit_" + k + ".csv"));
  }
  for (const auto& [k, h] : result.rank_histograms) {
    write_histogram_csv(h, out_dir / "histograms" / ("rank_" + k + ".csv"));
  }
  for (const auto& [k, h] : result.band_depth_histograms) {
    write_histogram_csv(h, out_dir / "histograms" / ("bdr_" + k + ".csv"));
  }
}

}  // namespace fieldcast
