#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fieldcast/csv.hpp"
#include "fieldcast/experiment.hpp"
#include "fieldcast/ingest.hpp"
#include "fieldcast/serialize.hpp"
#include "fieldcast/synth.hpp"
#include "fieldcast/verify.hpp"

namespace fieldcast::cli {
namespace {

struct Options {
  std::string config;
  std::vector<std::string> set;
  std::string data;
  std::string params;
  std::string fields;
  std::string date;
  std::string method = "ngr+";
  std::string spatial = "none";
  std::size_t window = 25;
  std::size_t bins = 20;
  std::uint64_t seed = 1;
  std::size_t samples = 10000;
  std::size_t crps_samples = 5000;
  std::vector<std::string> thresholds;
  std::vector<std::string> regions;
  std::string out;
  std::size_t max_days = 0;
  std::size_t threads = 0;
};

std::pair<std::string, std::string> split_assignment(const std::string& text, const char* what) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError(std::string(what) + " must look like NAME=VALUE: '" + text + "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::vector<double> parse_thresholds(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& item : items) {
    for (const auto& t : split_list(item)) {
      try {
        out.push_back(csv::parse_real(t));
      } catch (const std::exception&) {
        throw UsageError("threshold is not a number: '" + t + "'");
      }
    }
  }
  return out;
}

std::vector<Region> parse_regions(const std::vector<std::string>& items) {
  std::vector<Region> out;
  for (const auto& item : items) {
    auto [name, ids] = split_assignment(item, "--region");
    out.push_back({name, split_list(ids)});
  }
  return out;
}

void require_input(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!std::filesystem::exists(path)) {
    throw UsageError(std::string(flag) + ": '" + path + "' does not exist");
  }
}

EnsembleDataset load_data(const std::string& dir) {
  require_input(dir, "--data");
  return load_dataset(DatasetPaths::in_directory(dir));
}

std::size_t require_day(const EnsembleDataset& data, const std::string& date) {
  if (date.empty()) throw UsageError("--date is required");
  const auto d = data.day_index(date);
  if (!d) throw UsageError("date " + date + " is not in the dataset");
  return *d;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

int cmd_synth(const Options& o, const CLI::App& sub, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (!o.config.empty()) require_input(o.config, "--config");
  KeyValueConfig cfg = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
  for (const auto& s : o.set) {
    auto [k, v] = split_assignment(s, "--set");
    cfg.set(k, v);
  }
  if (sub.get_option("--seed")->count() > 0 || !cfg.contains("seed")) {
    cfg.set("seed", std::to_string(o.seed));
  }
  SynthSpec spec;
  try {
    spec = synth_spec_from(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto data = generate(spec);
  std::filesystem::create_directories(o.out);
  write_dataset(data, DatasetPaths::in_directory(o.out));
  out << "wrote " << data.station_count() << " stations x " << data.day_count() << " days x "
      << data.members() << " members to " << o.out << '\n';
  return kExitOk;
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw UsageError("--out is required");
  const Method method = parse_method(o.method);
  const SpatialMode spatial = parse_spatial_mode(o.spatial);
  if (!valid_combination(method, spatial)) {
    throw UsageError("spatial mode " + o.spatial + " cannot be combined with method " + o.method);
  }
  const auto data = load_data(o.data);
  const std::size_t day = require_day(data, o.date);
  const auto window = window_for_day(data, day, o.window);
  if (!window) {
    err << "error: fewer than " << o.window << " usable training days before " << o.date << '\n';
    return kExitFailure;
  }
  FitSettings settings;
  settings.variogram_bins = o.bins;
  std::vector<std::string> warnings;
  const auto params = fit_day(data, *window, method, spatial, settings, nullptr, &warnings);
  print_warnings(warnings, err);
  write_model_parameters(params, o.out);
  out << "fitted " << params.method << " for " << params.target_day << " -> " << o.out << '\n';
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  require_input(o.params, "--params");
  const auto data = load_data(o.data);
  const auto params = read_model_parameters(o.params);
  const std::size_t day = require_day(data, o.date.empty() ? params.target_day : o.date);
  const auto stations = usable_stations(data, day, false);
  const auto f = forecast_day(params, data, day, stations);
  std::ostringstream csv_out;
  csv_out << "station_id,mean,sd,median,lower,upper\n";
  for (std::size_t i = 0; i < f.stations.size(); ++i) {
    const auto& p = f.predictives[i];
    const auto lo = quantile(p, 0.5 * (1.0 - kDefaultIntervalLevel));
    const auto hi = quantile(p, 0.5 * (1.0 + kDefaultIntervalLevel));
    csv_out << data.stations()[f.stations[i]].id << ',' << csv::format_real(mean(p)) << ','
            << csv::format_real(std::sqrt(variance(p))) << ',' << csv::format_real(median(p))
            << ',' << csv::format_real(lo) << ',' << csv::format_real(hi) << '\n';
  }
  write_text_file(o.out, csv_out.str());
  out << "wrote " << f.stations.size() << " predictives to " << o.out << '\n';
  return kExitOk;
}

int cmd_sample(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  require_input(o.params, "--params");
  if (o.samples < 1) throw UsageError("--samples must be positive");
  const auto data = load_data(o.data);
  const auto params = read_model_parameters(o.params);
  const SpatialMode spatial = parse_spatial_mode(o.spatial);
  const Method method = method_of(params);
  if (!valid_combination(method, spatial)) {
    throw UsageError("spatial mode " + o.spatial + " cannot be combined with method " +
                     params.method);
  }
  if (spatial == SpatialMode::kGrf && !params.variogram) {
    throw UsageError("--spatial grf needs parameters fitted with --spatial grf");
  }
  if (spatial == SpatialMode::kSpatialBma && params.member_variograms.empty()) {
    throw UsageError("--spatial spatial-bma needs parameters fitted with --spatial spatial-bma");
  }
  const std::size_t day = require_day(data, o.date.empty() ? params.target_day : o.date);
  const auto stations = usable_stations(data, day, false);
  const auto f = forecast_day(params, data, day, stations);
  RandomStream rng(o.seed, "sample/" + method_label(method, spatial) + "/" + data.days()[day]);
  const auto fields = sample_day(params, spatial, data, f, o.samples, rng);
  write_field_sample(fields, o.out);
  out << "wrote " << fields.sample_count() << " fields (" << to_string(fields.provenance)
      << ") to " << o.out << '\n';
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw UsageError("--out is required");
  require_input(o.fields, "--fields");
  const auto data = load_data(o.data);
  const std::size_t day = require_day(data, o.date);
  const auto sample = read_field_sample(o.fields);
  const Date& date = data.days()[day];
  const std::string label(to_string(sample.provenance));
  const auto thresholds = o.thresholds.empty() ? std::vector<double>{0.0}
                                               : parse_thresholds(o.thresholds);

  // Columns of stations with an observation.
  std::vector<Eigen::Index> cols;
  std::vector<double> obs;
  for (std::size_t c = 0; c < sample.station_order.size(); ++c) {
    const auto s = data.stations().index_of(sample.station_order[c]);
    if (!s) throw LoadError("fields mention unknown station " + sample.station_order[c]);
    if (const auto y = data.observation(day, *s)) {
      cols.push_back(static_cast<Eigen::Index>(c));
      obs.push_back(*y);
    } else {
      err << "warning: no observation at " << sample.station_order[c] << " on " << date << '\n';
    }
  }
  if (cols.empty()) {
    err << "error: no observed station to verify\n";
    return kExitFailure;
  }

  ScoreTable scores;
  RandomStream ties(o.seed, "ties/" + label + "/" + date);
  Histogram ranks(static_cast<std::size_t>(sample.sample_count() + 1));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const Eigen::VectorXd col = sample.fields.col(cols[c]);
    const std::span<const double> v(col.data(), static_cast<std::size_t>(col.size()));
    scores.add(date, sample.station_order[static_cast<std::size_t>(cols[c])], label, "crps",
               crps_ensemble(v, obs[c]));
    ranks.add(static_cast<std::size_t>(verification_rank(v, obs[c], ties) - 1));
  }

  std::vector<std::pair<std::string, std::vector<std::size_t>>> regions;
  {
    std::vector<std::size_t> all(cols.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    regions.emplace_back("all", std::move(all));
  }
  for (const auto& r : parse_regions(o.regions)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const auto& id = sample.station_order[static_cast<std::size_t>(cols[i])];
      if (std::find(r.station_ids.begin(), r.station_ids.end(), id) != r.station_ids.end()) {
        idx.push_back(i);
      }
    }
    if (idx.empty()) {
      err << "warning: region " << r.name << " has no observed station\n";
      continue;
    }
    regions.emplace_back(r.name, std::move(idx));
  }

  const bool ensemble = sample.provenance == Provenance::kRaw ||
                        sample.provenance == Provenance::kEcc || sample.sample_count() < 2;
  for (const auto& [name, idx] : regions) {
    Eigen::MatrixXd x(sample.sample_count(), static_cast<Eigen::Index>(idx.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.col(static_cast<Eigen::Index>(i)) = sample.fields.col(cols[idx[i]]);
      y[static_cast<Eigen::Index>(i)] = obs[idx[i]];
    }
    double es = 0.0;
    if (ensemble) {
      es = energy_score_ensemble(x, y);
    } else {
      const Eigen::Index half = x.rows() / 2;
      es = energy_score(x.topRows(half), x.middleRows(half, half), y);
    }
    scores.add(date, name, label, "es", es);
    scores.add(date, name, label, "ee", euclidean_error(spatial_median(x).median, y));
    std::optional<double> ds;
    if (x.rows() >= 2) ds = dawid_sebastiani_sample(x, y);
    scores.add(date, name, label, "ds", ds);
    std::vector<double> minima(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) minima[static_cast<std::size_t>(i)] = x.row(i).minCoeff();
    const double y_min = y.minCoeff();
    scores.add(date, name, label, "min_crps", crps_ensemble(minima, y_min));
    for (double thr : thresholds) {
      scores.add(date, name, label, "bs_" + csv::format_real(thr),
                 brier_score(threshold_prob(minima, thr), y_min, thr));
    }
  }
  const std::filesystem::path dir(o.out);
  scores.write_csv(dir / "scores.csv");
  write_histogram_csv(ranks, dir / "rank.csv");
  out << "wrote " << scores.rows().size() << " scores to " << (dir / "scores.csv").string()
      << '\n';
  return kExitOk;
}

int cmd_experiment(const Options& o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (!o.config.empty()) require_input(o.config, "--config");
  KeyValueConfig cfg = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--data")) cfg.set("data", o.data);
  if (given("--method")) cfg.set("method", o.method);
  if (given("--spatial")) cfg.set("spatial", o.spatial);
  if (given("--window")) cfg.set("window", std::to_string(o.window));
  if (given("--seed")) cfg.set("seed", std::to_string(o.seed));
  if (given("--samples")) cfg.set("samples", std::to_string(o.samples));
  if (given("--crps-samples")) cfg.set("crps_samples", std::to_string(o.crps_samples));
  if (given("--bins")) cfg.set("bins", std::to_string(o.bins));
  if (given("--max-days")) cfg.set("max_days", std::to_string(o.max_days));
  if (given("--threads")) cfg.set("threads", std::to_string(o.threads));
  if (given("--out")) cfg.set("out", o.out);
  if (given("--threshold")) {
    std::string joined;
    for (double t : parse_thresholds(o.thresholds)) {
      joined += (joined.empty() ? "" : ",") + csv::format_real(t);
    }
    cfg.set("threshold", joined);
  }
  for (const auto& r : o.regions) {
    auto [name, ids] = split_assignment(r, "--region");
    cfg.set("region." + name, ids);
  }
  const auto config = experiment_config_from(cfg);
  expand_combinations(config);
  if (config.data_dir.empty()) throw UsageError("no data directory (--data or 'data' key)");
  const auto data = load_data(config.data_dir.string());
  const auto result = run_experiment(config, data);
  write_experiment_outputs(result, config.out_dir);
  print_warnings(result.warnings, err);
  out << "scored " << result.scored_days.size() << " days, skipped "
      << result.skipped_days.size() << ", " << result.warnings.size() << " warnings -> "
      << config.out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ensemble forecast postprocessing, joint field simulation and verification"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a known truth");
  synth->add_option("--config", o.config, "key = value spec file");
  synth->add_option("--set", o.set, "Override a spec key, KEY=VALUE");
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* fit = app.add_subcommand("fit", "Fit parameters for one target day");
  fit->add_option("--data", o.data, "Dataset directory")->required();
  fit->add_option("--date", o.date, "Target date")->required();
  fit->add_option("--method", o.method, "ngr+, ngrc or bma");
  fit->add_option("--spatial", o.spatial, "none, grf, ecc or spatial-bma");
  fit->add_option("--window", o.window, "Training window length in days");
  fit->add_option("--bins", o.bins, "Variogram bins");
  fit->add_option("--seed", o.seed, "Random seed");
  fit->add_option("--out", o.out, "Parameter JSON file")->required();

  auto* predict = app.add_subcommand("predict", "Write predictive summaries for one day");
  predict->add_option("--data", o.data, "Dataset directory")->required();
  predict->add_option("--params", o.params, "Parameter JSON file")->required();
  predict->add_option("--date", o.date, "Date (defaults to the fitted target day)");
  predict->add_option("--seed", o.seed, "Random seed");
  predict->add_option("--out", o.out, "Output CSV")->required();

  auto* smp = app.add_subcommand("sample", "Draw joint forecast fields for one day");
  smp->add_option("--data", o.data, "Dataset directory")->required();
  smp->add_option("--params", o.params, "Parameter JSON file")->required();
  smp->add_option("--date", o.date, "Date (defaults to the fitted target day)");
  smp->add_option("--spatial", o.spatial, "none, grf, ecc or spatial-bma");
  smp->add_option("-n,--n,--samples", o.samples, "Number of fields");
  smp->add_option("--seed", o.seed, "Random seed");
  smp->add_option("--out", o.out, "Field-sample CSV")->required();

  auto* verify = app.add_subcommand("verify", "Score forecast fields against observations");
  verify->add_option("--fields", o.fields, "Field-sample CSV")->required();
  verify->add_option("--data", o.data, "Dataset directory with the observations")->required();
  verify->add_option("--date", o.date, "Verification date")->required();
  verify->add_option("--threshold", o.thresholds, "Brier thresholds for the region minimum");
  verify->add_option("--region", o.regions, "Station subset, NAME=ID,ID,...");
  verify->add_option("--seed", o.seed, "Random seed for rank ties");
  verify->add_option("--out", o.out, "Output directory")->required();

  auto* exp = app.add_subcommand("experiment", "Rolling-window experiment over all target days");
  exp->add_option("--config", o.config, "key = value experiment manifest");
  exp->add_option("--data", o.data, "Dataset directory");
  exp->add_option("--method", o.method, "Comma-separated methods or 'all'");
  exp->add_option("--spatial", o.spatial, "Comma-separated spatial modes or 'all'");
  exp->add_option("--window", o.window, "Training window length in days");
  exp->add_option("--seed", o.seed, "Random seed");
  exp->add_option("--samples", o.samples, "Fields per multivariate forecast");
  exp->add_option("--crps-samples", o.crps_samples, "Draws per sample-based CRPS");
  exp->add_option("--threshold", o.thresholds, "Brier thresholds for the region minimum");
  exp->add_option("--region", o.regions, "Station subset, NAME=ID,ID,...");
  exp->add_option("--bins", o.bins, "Variogram bins");
  exp->add_option("--max-days", o.max_days, "Score at most this many target days");
  exp->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  exp->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(o, *synth, out);
    if (*fit) return cmd_fit(o, out, err);
    if (*predict) return cmd_predict(o, out);
    if (*smp) return cmd_sample(o, out);
    if (*verify) return cmd_verify(o, out, err);
    if (*exp) return cmd_experiment(o, *exp, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fieldcast::cli
