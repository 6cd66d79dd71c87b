#include "fieldcast/synth.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fieldcast/random.hpp"
#include "fieldcast/spatial.hpp"

namespace fieldcast {
namespace {

std::vector<Date> consecutive_dates(const std::string& start, std::size_t n) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (std::sscanf(start.c_str(), "%d-%u-%u", &y, &m, &d) != 3) {
    throw std::invalid_argument("start_date must be YYYY-MM-DD: '" + start + "'");
  }
  const std::chrono::year_month_day first{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
  if (!first.ok()) throw std::invalid_argument("invalid start_date '" + start + "'");
  std::vector<Date> out;
  out.reserve(n);
  std::chrono::sys_days day{first};
  for (std::size_t i = 0; i < n; ++i, day += std::chrono::days{1}) {
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    out.emplace_back(buf);
  }
  return out;
}

std::vector<double> equal_or_given(const std::vector<double>& given, int members) {
  if (given.empty()) return std::vector<double>(static_cast<std::size_t>(members), 1.0 / members);
  return given;
}

double sample_variance(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
}

}  // namespace

std::string_view to_string(SynthTruth t) {
  switch (t) {
    case SynthTruth::kNgrPlus:
      return "ngr+";
    case SynthTruth::kNgrC:
      return "ngrc";
    case SynthTruth::kBma:
      return "bma";
  }
  return "?";
}

SynthTruth parse_synth_truth(std::string_view s) {
  if (s == "ngr+") return SynthTruth::kNgrPlus;
  if (s == "ngrc") return SynthTruth::kNgrC;
  if (s == "bma") return SynthTruth::kBma;
  throw std::invalid_argument("unknown truth model '" + std::string(s) + "'");
}

void SynthSpec::validate() const {
  if (stations < 1 || members < 1 || days < 1) {
    throw std::invalid_argument("synth: stations, members and days must be positive");
  }
  if (!(width_km > 0.0 && height_km > 0.0)) {
    throw std::invalid_argument("synth: domain size must be positive");
  }
  if (!(error_theta >= 0.0 && error_theta <= 1.0) || !(error_range_km > 0.0)) {
    throw std::invalid_argument("synth: need error_theta in [0, 1] and error_range_km > 0");
  }
  if (!(member_theta >= 0.0 && member_theta <= 1.0) || !(member_range_km > 0.0) ||
      !(anomaly_range_km > 0.0)) {
    throw std::invalid_argument("synth: invalid member or anomaly correlation");
  }
  if (!(noise_scale >= 0.0) || !(member_sd >= 0.0) || !(spread_ratio >= 0.0)) {
    throw std::invalid_argument("synth: scales must be non-negative");
  }
  if (!(missing_observation_fraction >= 0.0 && missing_observation_fraction < 1.0)) {
    throw std::invalid_argument("synth: missing_observation_fraction must lie in [0, 1)");
  }
  const auto m = static_cast<std::size_t>(members);
  switch (truth) {
    case SynthTruth::kNgrPlus:
      if (!ngr_plus.beta.empty() && ngr_plus.beta.size() != m) {
        throw std::invalid_argument("synth: NGR+ truth needs one coefficient per member");
      }
      if (spread_ratio > 0.0 && spread_ratio * spread_ratio * ngr_plus.d() >= 1.0) {
        throw std::invalid_argument("synth: spread_ratio^2 d must be below 1");
      }
      break;
    case SynthTruth::kNgrC:
      if (spread_ratio > 0.0) {
        throw std::invalid_argument(
            "synth: the NGRc truth fixes the spread ratio at sqrt((1 - c) / d)");
      }
      if (!ngr_c_b.empty() && ngr_c_b.size() != m) {
        throw std::invalid_argument("synth: NGRc truth needs one coefficient per member");
      }
      if (!(ngr_c_c >= 0.0 && ngr_c_c < 1.0) || !(ngr_c_d >= 0.0)) {
        throw std::invalid_argument("synth: NGRc truth needs 0 <= c < 1 and d >= 0");
      }
      break;
    case SynthTruth::kBma: {
      if (!bma.members.empty()) {
        if (bma.members.size() != m) {
          throw std::invalid_argument("synth: BMA truth needs one kernel per member");
        }
        double total = 0.0;
        for (const auto& k : bma.members) {
          if (!(k.weight >= 0.0)) throw std::invalid_argument("synth: negative BMA weight");
          total += k.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) {
          throw std::invalid_argument("synth: BMA weights must sum to one");
        }
      }
      if (!(bma.sigma2 > 0.0)) throw std::invalid_argument("synth: BMA sigma2 must be positive");
      break;
    }
  }
}

SynthSpec synth_spec_from(const KeyValueConfig& cfg) {
  cfg.require_known({"stations", "width_km", "height_km", "layout", "members", "days",
                     "start_date", "truth", "a", "b", "c", "d", "obs_offset", "weights", "bma_a",
                     "bma_b", "sigma2", "bma_member_per_day", "error_theta", "error_range_km",
                     "noise_scale", "climate_mean", "climate_sd", "anomaly_sd",
                     "anomaly_range_km", "member_sd", "spread_ratio", "member_theta",
                     "member_range_km", "spread_day_log_sd", "spread_station_log_sd",
                     "missing_observation_fraction", "seed"});
  SynthSpec s;
  auto count = [&](std::string_view key, long long fallback) {
    const long long v = cfg.get_integer(key, fallback);
    if (v < 1) throw std::invalid_argument("synth: '" + std::string(key) + "' must be positive");
    return v;
  };
  s.stations = static_cast<std::size_t>(count("stations", static_cast<long long>(s.stations)));
  s.width_km = cfg.get_double("width_km", s.width_km);
  s.height_km = cfg.get_double("height_km", s.height_km);
  const auto layout = cfg.get_string("layout", "random");
  if (layout != "grid" && layout != "random") {
    throw std::invalid_argument("synth: layout must be grid or random");
  }
  s.grid_layout = layout == "grid";
  s.members = static_cast<int>(count("members", s.members));
  s.days = static_cast<std::size_t>(count("days", static_cast<long long>(s.days)));
  s.start_date = cfg.get_string("start_date", s.start_date);
  s.truth = parse_synth_truth(cfg.get_string("truth", "ngr+"));

  const auto m = static_cast<std::size_t>(s.members);
  auto per_member = [&](std::string_view key, double fallback) {
    auto v = cfg.get_double_list(key);
    if (v.empty()) return std::vector<double>(m, fallback);
    if (v.size() == 1) return std::vector<double>(m, v.front());
    if (v.size() != m) {
      throw std::invalid_argument("synth: '" + std::string(key) + "' needs 1 or M values");
    }
    return v;
  };
  auto non_negative = [](const std::vector<double>& v, std::string_view key) {
    for (double x : v) {
      if (!(x >= 0.0)) {
        throw std::invalid_argument("synth: '" + std::string(key) + "' must be non-negative");
      }
    }
  };
  const auto b = per_member("b", 1.0 / s.members);
  const double c = cfg.get_double("c", s.truth == SynthTruth::kNgrC ? s.ngr_c_c : s.ngr_plus.c());
  const double d = cfg.get_double("d", s.truth == SynthTruth::kNgrC ? s.ngr_c_d : s.ngr_plus.d());
  non_negative(b, "b");
  non_negative({c, d}, "c and d");
  s.ngr_plus.a = cfg.get_double("a", s.ngr_plus.a);
  s.ngr_plus.beta.clear();
  for (double x : b) s.ngr_plus.beta.push_back(std::sqrt(x));
  s.ngr_plus.c_raw = std::sqrt(c);
  s.ngr_plus.d_raw = std::sqrt(d);
  s.ngr_c_b = b;
  s.ngr_c_c = c;
  s.ngr_c_d = d;
  s.obs_offset = cfg.get_double("obs_offset", s.obs_offset);

  const auto w = per_member("weights", 1.0 / s.members);
  const auto ba = per_member("bma_a", 0.0);
  const auto bb = per_member("bma_b", 1.0);
  s.bma.members.clear();
  for (std::size_t k = 0; k < m; ++k) s.bma.members.push_back({ba[k], bb[k], w[k]});
  s.bma.sigma2 = cfg.get_double("sigma2", s.bma.sigma2);
  s.bma_member_per_day = cfg.get_bool("bma_member_per_day", s.bma_member_per_day);

  s.error_theta = cfg.get_double("error_theta", s.error_theta);
  s.error_range_km = cfg.get_double("error_range_km", s.error_range_km);
  s.noise_scale = cfg.get_double("noise_scale", s.noise_scale);
  s.climate_mean = cfg.get_double("climate_mean", s.climate_mean);
  s.climate_sd = cfg.get_double("climate_sd", s.climate_sd);
  s.anomaly_sd = cfg.get_double("anomaly_sd", s.anomaly_sd);
  s.anomaly_range_km = cfg.get_double("anomaly_range_km", s.anomaly_range_km);
  s.member_sd = cfg.get_double("member_sd", s.member_sd);
  s.spread_ratio = cfg.get_double("spread_ratio", s.spread_ratio);
  s.member_theta = cfg.get_double("member_theta", s.member_theta);
  s.member_range_km = cfg.get_double("member_range_km", s.member_range_km);
  s.spread_day_log_sd = cfg.get_double("spread_day_log_sd", s.spread_day_log_sd);
  s.spread_station_log_sd = cfg.get_double("spread_station_log_sd", s.spread_station_log_sd);
  s.missing_observation_fraction =
      cfg.get_double("missing_observation_fraction", s.missing_observation_fraction);
  s.seed = static_cast<std::uint64_t>(cfg.get_integer("seed", static_cast<long long>(s.seed)));
  s.validate();
  return s;
}

StationSet synth_stations(const SynthSpec& spec) {
  std::vector<Station> out;
  out.reserve(spec.stations);
  auto id = [](std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%03zu", i + 1);
    return std::string(buf);
  };
  if (spec.grid_layout) {
    const auto cols = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(spec.stations) * spec.width_km / spec.height_km)));
    const std::size_t rows = (spec.stations + cols - 1) / cols;
    for (std::size_t i = 0; i < spec.stations; ++i) {
      const double x = (static_cast<double>(i % cols) + 0.5) * spec.width_km / cols;
      const double y = (static_cast<double>(i / cols) + 0.5) * spec.height_km / rows;
      out.push_back({id(i), x, y, std::nullopt, std::nullopt});
    }
  } else {
    RandomStream rng(spec.seed, "synth/stations");
    for (std::size_t i = 0; i < spec.stations; ++i) {
      const double x = rng.uniform() * spec.width_km;
      const double y = rng.uniform() * spec.height_km;
      out.push_back({id(i), x, y, std::nullopt, std::nullopt});
    }
  }
  return StationSet(std::move(out));
}

EnsembleDataset generate(const SynthSpec& spec) {
  spec.validate();
  const StationSet stations = synth_stations(spec);
  const std::vector<Date> dates = consecutive_dates(spec.start_date, spec.days);
  const std::size_t n_st = stations.size();
  const std::size_t n_days = spec.days;
  const auto n_mem = static_cast<std::size_t>(spec.members);

  const CorrelatedSampler anomaly(build_correlation_matrix(0.0, spec.anomaly_range_km, stations));
  const CorrelatedSampler member_noise(
      build_correlation_matrix(spec.member_theta, spec.member_range_km, stations));
  const CorrelatedSampler error(
      build_correlation_matrix(spec.error_theta, spec.error_range_km, stations));

  RandomStream climate_rng(spec.seed, "synth/climate");
  Eigen::VectorXd climate(static_cast<Eigen::Index>(n_st));
  Eigen::VectorXd station_scale(static_cast<Eigen::Index>(n_st));
  for (std::size_t s = 0; s < n_st; ++s) {
    climate[static_cast<Eigen::Index>(s)] = spec.climate_mean + spec.climate_sd * climate_rng.normal();
    station_scale[static_cast<Eigen::Index>(s)] =
        std::exp(spec.spread_station_log_sd * climate_rng.normal());
  }

  const std::vector<double> b_plus = [&] {
    if (spec.ngr_plus.beta.empty()) return equal_or_given({}, spec.members);
    std::vector<double> b(n_mem);
    for (std::size_t m = 0; m < n_mem; ++m) b[m] = spec.ngr_plus.b(m);
    return b;
  }();
  const std::vector<double> b_c = equal_or_given(spec.ngr_c_b, spec.members);

  // Member perturbation level. With a target spread ratio the typical
  // ensemble variance S2 solves S2 = ratio^2 (c + d S2).
  double member_sd = spec.member_sd;
  if (spec.spread_ratio > 0.0) {
    if (spec.truth == SynthTruth::kBma) {
      member_sd = spec.spread_ratio * std::sqrt(spec.bma.sigma2);
    } else {
      const double r2 = spec.spread_ratio * spec.spread_ratio;
      member_sd = std::sqrt(r2 * spec.ngr_plus.c() / (1.0 - r2 * spec.ngr_plus.d()));
    }
  }

  std::vector<std::optional<double>> forecasts(n_days * n_st * n_mem);
  std::vector<double> ensemble_var(n_days * n_st);
  RandomStream day_rng(spec.seed, "synth/day-scale");
  RandomStream anomaly_rng(spec.seed, "synth/anomaly");
  RandomStream member_rng(spec.seed, "synth/members");
  for (std::size_t t = 0; t < n_days; ++t) {
    const double day_scale = std::exp(spec.spread_day_log_sd * day_rng.normal());
    const Eigen::MatrixXd a = anomaly.draw(1, anomaly_rng);
    const Eigen::MatrixXd z = member_noise.draw(n_mem, member_rng);
    for (std::size_t s = 0; s < n_st; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      const double latent = climate[si] + spec.anomaly_sd * a(0, si);
      const double amp = member_sd * day_scale * station_scale[si];
      std::vector<double> vals(n_mem);
      for (std::size_t m = 0; m < n_mem; ++m) {
        vals[m] = latent + amp * z(static_cast<Eigen::Index>(m), si);
        forecasts[(t * n_st + s) * n_mem + m] = vals[m];
      }
      ensemble_var[t * n_st + s] = sample_variance(vals);
    }
  }

  // NGRc climatology follows from the generated spreads.
  std::vector<double> xi2(n_st, 0.0);
  if (spec.truth == SynthTruth::kNgrC) {
    for (std::size_t s = 0; s < n_st; ++s) {
      double mean_s2 = 0.0;
      for (std::size_t t = 0; t < n_days; ++t) mean_s2 += ensemble_var[t * n_st + s];
      mean_s2 /= static_cast<double>(n_days);
      xi2[s] = spec.ngr_c_c < 1.0 && mean_s2 > 0.0 ? spec.ngr_c_d * mean_s2 / (1.0 - spec.ngr_c_c)
                                                   : 1.0;
    }
  }

  std::vector<BmaMember> kernels = spec.bma.members;
  if (kernels.empty()) kernels.assign(n_mem, BmaMember{0.0, 1.0, 1.0 / spec.members});

  std::vector<std::optional<double>> observations(n_days * n_st);
  RandomStream error_rng(spec.seed, "synth/error");
  RandomStream pick_rng(spec.seed, "synth/bma-member");
  RandomStream missing_rng(spec.seed, "synth/missing");
  auto pick_member = [&]() {
    double u = pick_rng.uniform();
    for (std::size_t m = 0; m < n_mem; ++m) {
      if (u < kernels[m].weight) return m;
      u -= kernels[m].weight;
    }
    return n_mem - 1;
  };
  for (std::size_t t = 0; t < n_days; ++t) {
    const Eigen::MatrixXd e = error.draw(1, error_rng);
    const std::size_t day_member = spec.bma_member_per_day ? pick_member() : 0;
    for (std::size_t s = 0; s < n_st; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      const std::size_t base = (t * n_st + s) * n_mem;
      const double s2 = ensemble_var[t * n_st + s];
      double mean = 0.0;
      double sd = 0.0;
      switch (spec.truth) {
        case SynthTruth::kNgrPlus:
          mean = spec.ngr_plus.a;
          for (std::size_t m = 0; m < n_mem; ++m) mean += b_plus[m] * *forecasts[base + m];
          sd = std::sqrt(spec.ngr_plus.c() + spec.ngr_plus.d() * s2);
          break;
        case SynthTruth::kNgrC:
          mean = climate[si] + spec.obs_offset;
          for (std::size_t m = 0; m < n_mem; ++m) {
            mean += b_c[m] * (*forecasts[base + m] - climate[si]);
          }
          sd = std::sqrt(spec.ngr_c_c * xi2[s] + spec.ngr_c_d * s2);
          break;
        case SynthTruth::kBma: {
          const std::size_t k = spec.bma_member_per_day ? day_member : pick_member();
          mean = kernels[k].a + kernels[k].b * *forecasts[base + k];
          sd = std::sqrt(spec.bma.sigma2);
          break;
        }
      }
      const double y = mean + spec.noise_scale * sd * e(0, si);
      const bool missing = spec.missing_observation_fraction > 0.0 &&
                           missing_rng.uniform() < spec.missing_observation_fraction;
      if (!missing) observations[t * n_st + s] = y;
    }
  }

  return EnsembleDataset(stations, dates, spec.members, std::move(forecasts),
                         std::move(observations));
}

double brute_force_crps(const UnivariatePredictive& dist, double y, double grid_step) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("brute_force_crps: grid_step must be > 0");
  const double mu = mean(dist);
  const double sd = std::sqrt(variance(dist));
  const double lo = std::min(mu - 10.0 * sd, y);
  const double hi = std::max(mu + 10.0 * sd, y);
  auto integrate = [&](double from, double to, bool above) {
    if (to <= from) return 0.0;
    const auto n = static_cast<std::size_t>(std::ceil((to - from) / grid_step));
    const double h = (to - from) / static_cast<double>(n);
    auto f = [&](double x) {
      const double F = cdf(dist, x);
      const double g = above ? 1.0 - F : F;
      return g * g;
    };
    double sum = 0.5 * (f(from) + f(to));
    for (std::size_t i = 1; i < n; ++i) sum += f(from + h * static_cast<double>(i));
    return sum * h;
  };
  return integrate(lo, y, false) + integrate(y, hi, true);
}

}  // namespace fieldcast
