#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fieldcast/random.hpp"
#include "fieldcast/types.hpp"

namespace fieldcast {

// All scores are negatively oriented: smaller is better.

// (1{y <= x} - G(x))^2 where G(x) is the forecast probability of y <= x.
double brier_score(double prob_leq_x, double y, double x);

// (1/J) sum |x_j - y| - (1/(2J)) sum |x_j - x'_j| from two independent samples.
double crps_sample(std::span<const double> x, std::span<const double> x_prime, double y);

// (1/M) sum |f_m - y| - (1/(2 M^2)) sum_i sum_j |f_i - f_j|.
double crps_ensemble(std::span<const double> members, double y);

// Two-sample energy score; rows of `x` and `x_prime` are fields.
double energy_score(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                    const Eigen::VectorXd& y);
// Ensemble energy score with the full double sum over member pairs.
double energy_score_ensemble(const Eigen::MatrixXd& members, const Eigen::VectorXd& y);

double euclidean_error(const Eigen::VectorXd& median, const Eigen::VectorXd& y);

struct SpatialMedian {
  Eigen::VectorXd median;
  int iterations = 0;
  bool converged = false;
};

// Geometric (L1) median of the rows of `x` by Weiszfeld iteration with the
// Vardi-Zhang modification at data points.
SpatialMedian spatial_median(const Eigen::MatrixXd& x, double tolerance = 1e-8,
                             int max_iterations = 1000);

inline constexpr double kSampleCovarianceJitter = 1e-5;

// log det(Sigma) + (y - mu)' Sigma^-1 (y - mu). `diagonal_jitter` is added
// to Sigma's diagonal first. Throws std::runtime_error if Sigma is not
// positive definite.
double dawid_sebastiani(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                        const Eigen::VectorXd& y, double diagonal_jitter = 0.0);

// Dawid-Sebastiani score with mean and covariance estimated from the rows of
// `sample`, plus kSampleCovarianceJitter on the diagonal.
double dawid_sebastiani_sample(const Eigen::MatrixXd& sample, const Eigen::VectorXd& y);

struct MultivariateComponent {
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Mean and covariance of a Gaussian mixture.
Moments mixture_moments(std::span<const MultivariateComponent> components);

struct Histogram {
  std::vector<std::size_t> counts;
  std::size_t total = 0;

  explicit Histogram(std::size_t bins = 0) : counts(bins, 0) {}
  std::size_t bins() const { return counts.size(); }
  void add(std::size_t bin) {
    ++counts.at(bin);
    ++total;
  }
  double frequency(std::size_t bin) const {
    return total == 0 ? 0.0 : static_cast<double>(counts[bin]) / static_cast<double>(total);
  }
  Histogram& operator+=(const Histogram& other);
};

void write_histogram_csv(const Histogram& h, const std::filesystem::path& path);
Histogram read_histogram_csv(const std::filesystem::path& path);

double pit(const UnivariatePredictive& dist, double y);
Histogram pit_histogram(std::span<const double> values, std::size_t bins = 20);

// Rank of y among {y, f_1..f_M} in 1..M+1, ties resolved at random.
int verification_rank(std::span<const double> members, double y, RandomStream& rng);
Histogram rank_histogram(std::span<const int> ranks, int members);

// Random `members`-draw ensemble from a continuous predictive.
std::vector<double> discretize(const UnivariatePredictive& dist, int members, RandomStream& rng);

// Pre-ranks of all rows of `x` (M + 1 vectors of dimension d):
// (1/d) sum_k [M + 1 - rank(x_k)] [rank(x_k) - 1] + M, coordinate ties
// resolved at random.
std::vector<double> band_depth_preranks(const Eigen::MatrixXd& x, RandomStream& rng);
double band_depth_prerank(const Eigen::MatrixXd& x, Eigen::Index index, RandomStream& rng);

// Rank of row `observation`'s pre-rank among all pre-ranks, ties at random.
int band_depth_rank(const Eigen::MatrixXd& x, Eigen::Index observation, RandomStream& rng);

// sum_i |zeta_i - 1/I| over the relative frequencies of the histogram.
double reliability_index(const Histogram& h);

inline constexpr double kDefaultIntervalLevel = 19.0 / 21.0;

struct IntervalOutcome {
  bool covered = false;
  double width = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Central prediction interval [q_{(1-level)/2}, q_{(1+level)/2}].
IntervalOutcome interval_coverage_width(const UnivariatePredictive& dist, double y,
                                        double level = kDefaultIntervalLevel);
// Raw-ensemble convention: the interval is the ensemble range.
IntervalOutcome ensemble_range_interval(std::span<const double> members, double y);

// PIT of an observed difference y_i - y_j under
// N(mu_i - mu_j, s_i^2 - 2 rho s_i s_j + s_j^2).
double temp_difference_pit(const GaussianPredictive& pred_i, const GaussianPredictive& pred_j,
                           double rho, double observed_difference);
// Empirical-CDF version for ensemble-represented forecasts.
double temp_difference_pit_ensemble(std::span<const double> predicted_differences,
                                    double observed_difference);
// Mean of |PIT - 0.5|; 0.25 under calibration.
double mad_from_half(std::span<const double> pit_values);

struct ErrorSummary {
  double mae = 0.0;
  double rmse = 0.0;
};

// MAE about the predictive medians, RMSE about the predictive means.
ErrorSummary mae_rmse(std::span<const double> medians, std::span<const double> means,
                      std::span<const double> y);

// Per-field minimum over the `subset` columns.
std::vector<double> composite_minimum(const ForecastFieldSample& fields,
                                      std::span<const std::size_t> subset);
// Fraction of values <= x.
double threshold_prob(std::span<const double> values, double x);

struct ScoreRow {
  std::string date;
  std::string unit;
  std::string method;
  std::string score_name;
  std::optional<double> value;
};

// Long-format score table written as `date,unit,method,score_name,value`.
class ScoreTable {
 public:
  void add(std::string date, std::string unit, std::string method, std::string score_name,
           std::optional<double> value);
  void append(const ScoreTable& other);
  const std::vector<ScoreRow>& rows() const { return rows_; }

  void write_csv(const std::filesystem::path& path) const;
  static ScoreTable read_csv(const std::filesystem::path& path);

 private:
  std::vector<ScoreRow> rows_;
};

}  // namespace fieldcast
