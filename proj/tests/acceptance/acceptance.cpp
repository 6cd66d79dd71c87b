// Acceptance suite: one PASS/FAIL line per criterion.
//
//   fieldcast_acceptance            run every criterion
//   fieldcast_acceptance --only N   run criterion N

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "fieldcast/distributions.hpp"
#include "fieldcast/ecc.hpp"
#include "fieldcast/experiment.hpp"
#include "fieldcast/ingest.hpp"
#include "fieldcast/ngr.hpp"
#include "fieldcast/random.hpp"
#include "fieldcast/serialize.hpp"
#include "fieldcast/spatial.hpp"
#include "fieldcast/synth.hpp"
#include "fieldcast/verify.hpp"
#include "oracles.hpp"

using namespace fieldcast;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool within_rel(double value, double truth, double tol) {
  return std::abs(value - truth) <= tol * std::abs(truth);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// 1. Closed-form CRPS against trapezoidal integration of the defining integral.
void criterion_closed_form_crps(Outcome& o) {
  const auto t0 = Clock::now();
  RandomStream rng(2024, "acceptance/crps-closed-form");
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = -10.0 + 20.0 * rng.uniform();
    const double sigma = 0.1 + 2.9 * rng.uniform();
    const double y = mu + sigma * 4.0 * (2.0 * rng.uniform() - 1.0);
    const GaussianPredictive g(mu, sigma * sigma);
    const double closed = crps_gaussian(g, y);
    const double brute = brute_force_crps(g, y, 1e-3 * sigma);
    worst = std::max(worst, std::abs(closed - brute));
  }
  const double t = seconds_since(t0);
  o.detail << "max |closed - brute| = " << fmt(worst, 3) << " over 1000 cases, " << fmt(t, 3)
           << " s";
  o.require(worst <= 1e-6, "difference <= 1e-6");
  o.require(t < 5.0, "runtime < 5 s");
}

// 2. Sample-based CRPS estimators.
void criterion_sample_crps(Outcome& o) {
  RandomStream rng(7, "acceptance/crps-sample");
  int inside = 0;
  for (int i = 0; i < 100; ++i) {
    const double mu = -5.0 + 10.0 * rng.uniform();
    const double sigma = 0.2 + 3.0 * rng.uniform();
    const double y = mu + sigma * rng.normal();
    const GaussianPredictive g(mu, sigma * sigma);
    const double closed = crps_gaussian(g, y);
    std::vector<double> x(5000);
    std::vector<double> xp(5000);
    for (auto& v : x) v = mu + sigma * rng.normal();
    for (auto& v : xp) v = mu + sigma * rng.normal();
    const double est = crps_sample(x, xp, y);
    // Standard error of the two-sample estimator from its per-pair terms.
    std::vector<double> terms(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      terms[j] = std::abs(x[j] - y) - 0.5 * std::abs(x[j] - xp[j]);
    }
    const auto ms = oracle::mean_and_se(terms);
    if (std::abs(est - closed) <= 3.0 * ms.se) ++inside;
  }
  std::vector<double> ens(5000);
  for (auto& v : ens) v = rng.normal();
  const double ensemble = crps_ensemble(ens, 0.0);
  o.detail << "crps_sample within 3 SE in " << inside << "/100 cases; crps_ensemble = "
           << fmt(ensemble, 6) << " (reference 0.23369)";
  o.require(inside == 100, "all 100 cases within 3 SE");
  o.require(std::abs(ensemble - 0.23369) <= 0.01, "ensemble CRPS within 0.01");
}

// 3. NGR+ parameter recovery by CRPS minimization.
void criterion_ngr_recovery(Outcome& o) {
  const auto t0 = Clock::now();
  constexpr int kSeeds = 20;
  constexpr std::size_t kTrain = 25;
  constexpr std::size_t kTest = 10;
  int ok_a = 0, ok_b = 0, ok_c = 0, ok_d = 0, ok_crps = 0;
  double worst_crps = 0.0;
  double mean_a = 0.0, mean_b = 0.0, mean_c = 0.0, mean_d = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SynthSpec spec;
    spec.stations = 100;
    spec.members = 20;
    spec.days = kTrain + kTest;
    spec.seed = static_cast<std::uint64_t>(seed);
    const auto data = generate(spec);
    NgrPlusParams truth = spec.ngr_plus;
    truth.beta.assign(20, std::sqrt(1.0 / 20.0));

    TrainingWindow w;
    w.target_day = kTrain;
    for (std::size_t d = 0; d < kTrain; ++d) w.training_days.push_back(d);
    const auto fit = fit_ngr_plus(data, w);
    const auto& p = fit.params;
    double b_total = 0.0;
    for (std::size_t m = 0; m < p.beta.size(); ++m) b_total += p.b(m);

    std::vector<std::size_t> test(kTest);
    std::iota(test.begin(), test.end(), kTrain);
    const double crps_fit = mean_crps_ngr_plus(p, data, test);
    const double crps_truth = mean_crps_ngr_plus(truth, data, test);
    const double rel = std::abs(crps_fit / crps_truth - 1.0);
    worst_crps = std::max(worst_crps, rel);

    mean_a += p.a / kSeeds;
    mean_b += b_total / kSeeds;
    mean_c += p.c() / kSeeds;
    mean_d += p.d() / kSeeds;
    ok_a += within_rel(p.a, truth.a, 0.15);
    ok_b += within_rel(b_total, 1.0, 0.15);
    ok_c += within_rel(p.c(), truth.c(), 0.15);
    ok_d += within_rel(p.d(), truth.d(), 0.15);
    ok_crps += rel <= 0.03;
  }
  const double t = seconds_since(t0);
  o.detail << "seeds within 15%: a " << ok_a << ", sum b " << ok_b << ", c " << ok_c << ", d "
           << ok_d << "; test CRPS within 3% " << ok_crps << " (worst " << fmt(100 * worst_crps, 3)
           << "%); seed means a " << fmt(mean_a) << ", sum b " << fmt(mean_b) << ", c "
           << fmt(mean_c) << ", d " << fmt(mean_d) << " (truth 1, 1, 1, 0.25); " << fmt(t, 3)
           << " s";
  o.require(ok_a == kSeeds && ok_b == kSeeds && ok_c == kSeeds && ok_d == kSeeds,
            "parameters within 15% for every seed");
  o.require(ok_crps == kSeeds, "test CRPS within 3% for every seed");
  o.require(t < 120.0, "runtime < 2 min");
}

// 4. Variogram pipeline recovery.
void criterion_variogram(Outcome& o) {
  constexpr double kTheta = 0.2;
  constexpr double kRange = 150.0;
  int recovered = 0;
  std::vector<VariogramBin> noise_free;
  double r_max = 0.0;
  for (int seed = 1; seed <= 20; ++seed) {
    SynthSpec spec;
    spec.stations = 200;
    spec.members = 10;
    spec.days = 26;
    spec.error_theta = kTheta;
    spec.error_range_km = kRange;
    spec.seed = static_cast<std::uint64_t>(100 + seed);
    const auto data = generate(spec);
    const auto window = window_for_day(data, 25, 25);
    const auto params = fit_day(data, *window, Method::kNgrPlus, SpatialMode::kGrf);
    const auto& v = *params.variogram;
    if (within_rel(v.theta, kTheta, 0.2) && within_rel(v.range_km, kRange, 0.2)) ++recovered;
    if (seed == 1) {
      noise_free = v.bins;
      r_max = PairDistances(data.stations()).max_distance();
    }
  }
  for (auto& b : noise_free) b.gamma = variogram_model(kTheta, kRange, b.distance_km, false);
  const auto exact = fit_variogram(noise_free, r_max);
  o.detail << recovered << "/20 seeds within 20%; noise-free fit (" << fmt(exact.theta, 6) << ", "
           << fmt(exact.range_km, 6) << ")";
  o.require(recovered >= 18, ">= 18 of 20 seeds");
  o.require(within_rel(exact.theta, kTheta, 0.01) && within_rel(exact.range_km, kRange, 0.01),
            "noise-free bins within 1%");
}

// 5. Spatial NGR sampling moments.
void criterion_spatial_sampling(Outcome& o) {
  const double xs[5][2] = {{0, 0}, {40, 10}, {90, 60}, {150, 20}, {30, 120}};
  std::vector<Station> list;
  for (int i = 0; i < 5; ++i) list.push_back({"S" + std::to_string(i + 1), xs[i][0], xs[i][1], {}, {}});
  const StationSet stations(std::move(list));
  const Eigen::MatrixXd corr = build_correlation_matrix(0.2, 150.0, stations);
  Eigen::VectorXd mu(5);
  mu << 5.0, 8.0, -3.0, 12.0, 1.5;
  Eigen::VectorXd sigma(5);
  sigma << 1.0, 2.0, 0.5, 1.5, 3.0;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 5; ++i) ids.push_back(stations[i].id);
  const auto pred = build_spatial_ngr(ids, mu, sigma, corr);
  RandomStream rng(5, "acceptance/spatial-sampling");
  constexpr std::size_t n = 100000;
  const auto fields = sample_fields(pred, n, rng).fields;

  const Eigen::MatrixXd sigma_true = pred.covariance();
  const Eigen::VectorXd m = fields.colwise().mean();
  const Eigen::MatrixXd centered = fields.rowwise() - m.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  double worst_z = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double se = std::sqrt((sigma_true(i, i) * sigma_true(j, j) +
                                   sigma_true(i, j) * sigma_true(i, j)) /
                                  static_cast<double>(n));
      worst_z = std::max(worst_z, std::abs(cov(i, j) - sigma_true(i, j)) / se);
    }
  }
  double worst_mean = 0.0;
  double worst_var = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto marginal = pred.marginal(i);
    worst_mean = std::max(worst_mean, std::abs(m[i] / marginal.mean() - 1.0));
    worst_var = std::max(worst_var, std::abs(cov(i, i) / marginal.variance() - 1.0));
  }
  o.detail << "max covariance deviation " << fmt(worst_z, 3) << " SE; marginal mean "
           << fmt(100 * worst_mean, 3) << "%, variance " << fmt(100 * worst_var, 3) << "%";
  o.require(worst_z <= 3.0, "covariance within 3 SE");
  o.require(worst_mean <= 0.01 && worst_var <= 0.01, "marginals within 1%");
}

std::vector<double> ranks_of(const Eigen::VectorXd& v) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k + 1);
  return r;
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const auto ra = ranks_of(a);
  const auto rb = ranks_of(b);
  const double n = static_cast<double>(ra.size());
  const double mean = (n + 1.0) / 2.0;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  return num / std::sqrt(da * db);
}

// 6. ECC marginals and rank correlations.
void criterion_ecc(Outcome& o) {
  RandomStream rng(6, "acceptance/ecc");
  int marginal_ok = 0;
  int spearman_ok = 0;
  constexpr int kInstances = 1000;
  for (int inst = 0; inst < kInstances; ++inst) {
    const int members = 2 + static_cast<int>(rng.index(30));
    const std::size_t stations = 2 + rng.index(8);
    Eigen::MatrixXd raw(members, static_cast<Eigen::Index>(stations));
    std::vector<std::vector<double>> quantiles;
    std::vector<RankPermutation> perms;
    std::vector<std::string> ids;
    for (std::size_t s = 0; s < stations; ++s) {
      const auto col = static_cast<Eigen::Index>(s);
      const double shift = rng.normal();
      for (int m = 0; m < members; ++m) raw(m, col) = shift + rng.normal() + 0.5 * raw(m, 0) * (s > 0);
      UnivariatePredictive dist = GaussianPredictive(5.0 * rng.normal(), 0.1 + rng.uniform());
      if (rng.uniform() < 0.5) {
        dist = MixturePredictive({{0.3, rng.normal(), 0.5 + rng.uniform()},
                                  {0.7, 2.0 + rng.normal(), 0.2 + rng.uniform()}});
      }
      quantiles.push_back(ecc_quantiles(dist, members));
      const Eigen::VectorXd c = raw.col(col);
      perms.push_back(rank_permutation(std::span<const double>(c.data(), c.size()), rng));
      ids.push_back("S" + std::to_string(s));
    }
    const auto out = ecc_reorder(quantiles, perms, ids).fields;
    bool marg = true;
    for (std::size_t s = 0; s < stations; ++s) {
      std::vector<double> v(out.rows());
      for (Eigen::Index m = 0; m < out.rows(); ++m) v[m] = out(m, static_cast<Eigen::Index>(s));
      std::sort(v.begin(), v.end());
      marg = marg && v == quantiles[s];
    }
    bool rho = true;
    for (Eigen::Index a = 0; a < out.cols(); ++a) {
      for (Eigen::Index b = a + 1; b < out.cols(); ++b) {
        rho = rho && spearman(out.col(a), out.col(b)) == spearman(raw.col(a), raw.col(b));
      }
    }
    marginal_ok += marg;
    spearman_ok += rho;
  }
  o.detail << "exact marginals " << marginal_ok << "/" << kInstances << ", exact Spearman "
           << spearman_ok << "/" << kInstances;
  o.require(marginal_ok == kInstances, "marginal multisets");
  o.require(spearman_ok == kInstances, "Spearman correlations");
}

// 7. Calibration closure for self-consistent forecasts.
void criterion_calibration(Outcome& o) {
  RandomStream rng(77, "acceptance/calibration");
  constexpr int kMembers = 20;

  std::vector<double> pits;
  std::vector<int> ranks;
  for (int i = 0; i < 10000; ++i) {
    const double mu = 10.0 * rng.normal();
    const double sd = 0.5 + 2.0 * rng.uniform();
    const GaussianPredictive g(mu, sd * sd);
    const double y = mu + sd * rng.normal();
    pits.push_back(pit(g, y));
    std::vector<double> ens(kMembers);
    for (auto& v : ens) v = mu + sd * rng.normal();
    ranks.push_back(verification_rank(ens, y, rng));
  }
  const auto pit_h = pit_histogram(pits, 20);
  const auto rank_h = rank_histogram(ranks, kMembers);

  std::vector<Station> list;
  for (int i = 0; i < 8; ++i) {
    list.push_back({"S" + std::to_string(i), 35.0 * (i % 4), 50.0 * (i / 4), {}, {}});
  }
  const StationSet stations(std::move(list));
  const CorrelatedSampler truth(build_correlation_matrix(0.2, 150.0, stations));
  const CorrelatedSampler independent(Eigen::MatrixXd::Identity(8, 8));
  Histogram calibrated(kMembers + 1);
  Histogram misspecified(kMembers + 1);
  for (int i = 0; i < 5000; ++i) {
    Eigen::MatrixXd x(kMembers + 1, 8);
    x.row(0) = truth.draw(1, rng);
    x.bottomRows(kMembers) = truth.draw(kMembers, rng);
    calibrated.add(static_cast<std::size_t>(band_depth_rank(x, 0, rng) - 1));
    x.bottomRows(kMembers) = independent.draw(kMembers, rng);
    misspecified.add(static_cast<std::size_t>(band_depth_rank(x, 0, rng) - 1));
  }
  const double p_pit = oracle::chi_square_uniform_pvalue(pit_h.counts);
  const double p_rank = oracle::chi_square_uniform_pvalue(rank_h.counts);
  const double p_band = oracle::chi_square_uniform_pvalue(calibrated.counts);

  const auto& c = misspecified.counts;
  const std::size_t ends = std::min(c.front(), c.back());
  std::size_t middle = 0;
  for (std::size_t k = c.size() / 3; k <= 2 * c.size() / 3; ++k) middle = std::max(middle, c[k]);
  o.detail << "chi-square p: PIT " << fmt(p_pit, 3) << ", rank " << fmt(p_rank, 3)
           << ", band depth " << fmt(p_band, 3) << "; independent marginals end bins "
           << c.front() << "/" << c.back() << " vs middle max " << middle;
  o.require(p_pit > 0.01 && p_rank > 0.01 && p_band > 0.01, "uniformity at level 0.01");
  o.require(ends > middle, "U-shaped band-depth histogram");
}

std::vector<std::string> central_stations(const SynthSpec& spec, std::size_t count) {
  const auto stations = synth_stations(spec);
  std::vector<std::size_t> idx(stations.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto dist = [&](std::size_t i) {
    return std::hypot(stations[i].x_km - spec.width_km / 2, stations[i].y_km - spec.height_km / 2);
  };
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return dist(a) < dist(b); });
  std::vector<std::string> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(stations[idx[k]].id);
  return out;
}

// 8. Minimum over a cluster of stations: independent vs GRF sampling.
void criterion_composite_minimum(Outcome& o) {
  const auto dir = oracle::scratch_dir("acceptance_minimum");
  double indep_crps = 0.0, grf_crps = 0.0, indep_bias = 0.0, grf_bias = 0.0;
  int wins = 0;
  constexpr int kSeeds = 20;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SynthSpec spec;
    spec.stations = 60;
    spec.width_km = 200.0;
    spec.height_km = 200.0;
    spec.climate_sd = 0.5;
    spec.members = 10;
    spec.days = 35;
    spec.truth = SynthTruth::kNgrC;
    spec.error_theta = 0.2;
    spec.error_range_km = 150.0;
    spec.seed = static_cast<std::uint64_t>(200 + seed);
    const auto data = generate(spec);
    ExperimentConfig cfg;
    cfg.methods = {"ngrc"};
    cfg.spatial = {"none", "grf"};
    cfg.window = 25;
    cfg.field_samples = 2000;
    cfg.crps_samples = 1000;
    cfg.regions = {{"cluster", central_stations(spec, 11)}};
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.out_dir = dir;
    const auto summary = nlohmann::json::parse(run_experiment(cfg, data).summary_json());
    const auto& cluster = summary["multivariate"]["cluster"];
    const double ci = cluster["ngrc"]["min_crps"].get<double>();
    const double cg = cluster["spatial-ngrc"]["min_crps"].get<double>();
    indep_crps += ci / kSeeds;
    grf_crps += cg / kSeeds;
    indep_bias += cluster["ngrc"]["min_err"].get<double>() / kSeeds;
    grf_bias += cluster["spatial-ngrc"]["min_err"].get<double>() / kSeeds;
    wins += cg <= 0.9 * ci;
  }
  const double reduction = 1.0 - grf_crps / indep_crps;
  o.detail << "min CRPS independent " << fmt(indep_crps) << " vs GRF " << fmt(grf_crps) << " ("
           << fmt(100 * reduction, 3) << "% lower, >= 10% in " << wins << "/20 seeds); E[min] bias "
           << fmt(indep_bias) << " vs " << fmt(grf_bias);
  o.require(reduction >= 0.10, "GRF CRPS >= 10% lower");
  o.require(indep_bias < 0.0, "independent E[min] bias negative");
}

// 9. Correction of an underdispersive ensemble.
void criterion_underdispersion(Outcome& o) {
  SynthSpec spec;
  spec.stations = 100;
  spec.members = 20;
  spec.days = 45;
  spec.spread_ratio = 0.3;
  spec.seed = 9;
  const auto data = generate(spec);
  ExperimentConfig cfg;
  cfg.methods = {"ngr+"};
  cfg.window = 25;
  cfg.field_samples = 200;
  cfg.crps_samples = 1000;
  cfg.out_dir = oracle::scratch_dir("acceptance_underdispersion");
  const auto summary = nlohmann::json::parse(run_experiment(cfg, data).summary_json());
  const auto& u = summary["univariate"];
  const double raw_cov = u["raw"]["pi_coverage"].get<double>();
  const double pp_cov = u["ngr+"]["pi_coverage"].get<double>();
  const double raw_crps = u["raw"]["crps"].get<double>();
  const double pp_crps = u["ngr+"]["crps"].get<double>();
  const double reduction = 1.0 - pp_crps / raw_crps;
  o.detail << "coverage raw " << fmt(100 * raw_cov, 3) << "%, postprocessed "
           << fmt(100 * pp_cov, 3) << "%; CRPS " << fmt(raw_crps) << " -> " << fmt(pp_crps)
           << " (" << fmt(100 * reduction, 3) << "% lower)";
  o.require(raw_cov < 0.5, "raw coverage < 50%");
  o.require(pp_cov >= 0.87 && pp_cov <= 0.93, "postprocessed coverage in [87%, 93%]");
  o.require(reduction >= 0.20, "CRPS >= 20% lower");
}

// Calls visit(x) for every tie-free configuration of n rows in d coordinates
// with the first coordinate fixed to 0..n-1; pre-ranks are equivariant under
// row relabeling, so this covers every configuration up to relabeling.
void for_each_configuration(int n, int d, const std::function<void(const Eigen::MatrixXd&)>& visit) {
  std::vector<std::vector<int>> perms(static_cast<std::size_t>(d), std::vector<int>(n));
  for (auto& p : perms) std::iota(p.begin(), p.end(), 0);
  Eigen::MatrixXd x(n, d);
  const std::function<void(int)> rec = [&](int k) {
    if (k == d) {
      for (int c = 0; c < d; ++c) {
        for (int r = 0; r < n; ++r) x(r, c) = perms[c][r];
      }
      visit(x);
      return;
    }
    std::sort(perms[k].begin(), perms[k].end());
    do {
      rec(k + 1);
    } while (k > 0 && std::next_permutation(perms[k].begin(), perms[k].end()));
  };
  rec(0);
}

// 10. Closed-form cross-checks.
void criterion_formulas(Outcome& o) {
  RandomStream rng(10, "acceptance/formulas");
  std::size_t exhaustive = 0, sampled = 0, mismatches = 0;
  auto check = [&](const Eigen::MatrixXd& x) {
    const auto pre = band_depth_preranks(x, rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double scaled_closed = pre[static_cast<std::size_t>(i)] * static_cast<double>(x.cols());
      const double scaled_pairs = oracle::prerank_pairwise(x, i) * static_cast<double>(x.cols());
      if (std::llround(scaled_closed) != std::llround(scaled_pairs) ||
          std::abs(scaled_closed - std::round(scaled_closed)) > 1e-9) {
        ++mismatches;
      }
    }
  };
  for (int d = 1; d <= 4; ++d) {
    for (int m = 1; m <= 6; ++m) {
      const int n = m + 1;
      double configs = 1.0;
      for (int k = 2; k <= n; ++k) configs *= k;
      configs = std::pow(configs, d - 1);
      if (configs <= 2e5) {
        for_each_configuration(n, d, [&](const Eigen::MatrixXd& x) {
          check(x);
          ++exhaustive;
        });
      } else {
        for (int rep = 0; rep < 20000; ++rep) {
          Eigen::MatrixXd x(n, d);
          for (int c = 0; c < d; ++c) {
            std::vector<int> p(n);
            std::iota(p.begin(), p.end(), 0);
            std::shuffle(p.begin(), p.end(), rng.engine());
            for (int r = 0; r < n; ++r) x(r, c) = p[r];
          }
          check(x);
          ++sampled;
        }
      }
    }
  }

  std::vector<MultivariateComponent> comps(3);
  comps[0].weight = 0.5;
  comps[0].mean = Eigen::Vector3d(5.0, -4.0, 8.0);
  comps[0].covariance = (Eigen::Matrix3d() << 2.0, 0.8, 0.5, 0.8, 1.5, 0.6, 0.5, 0.6, 1.0).finished();
  comps[1].weight = 0.3;
  comps[1].mean = Eigen::Vector3d(7.0, -2.0, 10.0);
  comps[1].covariance = (Eigen::Matrix3d() << 1.0, 0.5, 0.3, 0.5, 2.0, 0.4, 0.3, 0.4, 1.5).finished();
  comps[2].weight = 0.2;
  comps[2].mean = Eigen::Vector3d(9.0, 0.0, 12.0);
  comps[2].covariance = (Eigen::Matrix3d() << 1.5, 0.2, 0.6, 0.2, 1.0, 0.3, 0.6, 0.3, 2.0).finished();
  const auto moments = mixture_moments(comps);
  std::vector<Eigen::Matrix3d> chol;
  for (const auto& c : comps) chol.push_back(Eigen::LLT<Eigen::Matrix3d>(c.covariance).matrixL());
  constexpr int kDraws = 1000000;
  Eigen::MatrixXd draws(kDraws, 3);
  for (int i = 0; i < kDraws; ++i) {
    const double u = rng.uniform();
    const std::size_t k = u < 0.5 ? 0 : (u < 0.8 ? 1 : 2);
    const Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
    draws.row(i) = (comps[k].mean + chol[k] * z).transpose();
  }
  const Eigen::VectorXd mc_mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mc_mean.transpose();
  const Eigen::MatrixXd mc_cov = centered.transpose() * centered / (kDraws - 1.0);
  double worst_moment = 0.0;
  for (int i = 0; i < 3; ++i) {
    worst_moment = std::max(worst_moment, std::abs(mc_mean[i] / moments.mean[i] - 1.0));
    for (int j = 0; j < 3; ++j) {
      worst_moment =
          std::max(worst_moment, std::abs(mc_cov(i, j) / moments.covariance(i, j) - 1.0));
    }
  }

  std::vector<double> diff_pits;
  for (int i = 0; i < 100000; ++i) {
    const double mu_i = 10.0 * rng.normal();
    const double mu_j = 10.0 * rng.normal();
    const double s_i = 0.5 + 2.0 * rng.uniform();
    const double s_j = 0.5 + 2.0 * rng.uniform();
    const double rho = rng.uniform();
    const double z1 = rng.normal();
    const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * rng.normal();
    const double y_i = mu_i + s_i * z1;
    const double y_j = mu_j + s_j * z2;
    diff_pits.push_back(temp_difference_pit(GaussianPredictive(mu_i, s_i * s_i),
                                            GaussianPredictive(mu_j, s_j * s_j), rho, y_i - y_j));
  }
  const double mad = mad_from_half(diff_pits);

  o.detail << "pre-rank identity: " << exhaustive << " exhaustive + " << sampled
           << " sampled configurations, " << mismatches << " mismatches; mixture moments worst "
           << fmt(100 * worst_moment, 3) << "%; difference-PIT mad " << fmt(mad, 5);
  o.require(mismatches == 0, "pre-rank closed form equals pairwise sum");
  o.require(worst_moment <= 0.01, "mixture moments within 1%");
  o.require(std::abs(mad - 0.25) <= 0.005, "mad within 0.005 of 0.25");
}

// 11. Determinism and runtime of the full experiment.
void criterion_determinism(Outcome& o) {
  const auto dir = oracle::scratch_dir("acceptance_determinism");
  SynthSpec spec;
  spec.stations = 100;
  spec.members = 20;
  spec.days = 85;
  spec.error_theta = 0.2;
  spec.error_range_km = 150.0;
  spec.truth = SynthTruth::kBma;
  spec.seed = 11;
  write_dataset(generate(spec), DatasetPaths::in_directory(dir / "data"));
  const auto data = load_dataset(DatasetPaths::in_directory(dir / "data"));
  double worst = 0.0;
  std::size_t scored = 0;
  for (const char* run : {"run1", "run2"}) {
    ExperimentConfig cfg;
    cfg.data_dir = dir / "data";
    cfg.methods = {"all"};
    cfg.spatial = {"all"};
    cfg.seed = 2024;
    cfg.regions = {{"center", central_stations(spec, 11)}};
    cfg.out_dir = dir / run;
    const auto t0 = Clock::now();
    const auto result = run_experiment(cfg, data);
    write_experiment_outputs(result, cfg.out_dir);
    worst = std::max(worst, seconds_since(t0));
    scored = result.scored_days.size();
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "run1")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto other = dir / "run2" / std::filesystem::relative(e.path(), dir / "run1");
    if (!std::filesystem::exists(other) || read_text_file(e.path()) != read_text_file(other)) {
      ++differing;
    }
  }
  o.detail << scored << " target days, " << files << " output files, " << differing
           << " differing; slowest run " << fmt(worst, 4) << " s";
  o.require(scored == 60, "60 target days scored");
  o.require(files > 0 && differing == 0, "byte-identical outputs");
  o.require(worst < 600.0, "runtime < 10 min");
}

struct Criterion {
  const char* name;
  void (*run)(Outcome&);
};

const Criterion kCriteria[] = {
    {"closed-form CRPS vs brute-force integration", criterion_closed_form_crps},
    {"sample and ensemble CRPS estimators", criterion_sample_crps},
    {"NGR+ recovery by CRPS minimization", criterion_ngr_recovery},
    {"variogram pipeline recovery", criterion_variogram},
    {"spatial NGR sampling moments", criterion_spatial_sampling},
    {"ECC exactness", criterion_ecc},
    {"calibration closure", criterion_calibration},
    {"composite minimum, independent vs GRF", criterion_composite_minimum},
    {"underdispersion correction", criterion_underdispersion},
    {"closed-form cross-checks", criterion_formulas},
    {"experiment determinism and runtime", criterion_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 2;
    }
  }
  constexpr int count = static_cast<int>(std::size(kCriteria));
  if (only < 0 || only > count) {
    std::fprintf(stderr, "criterion must be 1..%d\n", count);
    return 2;
  }
  int failed = 0;
  for (int k = 1; k <= count; ++k) {
    if (only != 0 && k != only) continue;
    Outcome o;
    try {
      kCriteria[k - 1].run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, kCriteria[k - 1].name,
                o.detail.str().c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
