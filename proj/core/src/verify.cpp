#include "fieldcast/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "fieldcast/csv.hpp"

namespace fieldcast {
namespace {

// Distance between rows; exact absolute difference in one dimension.
double row_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b,
                    Eigen::Index j) {
  if (a.cols() == 1) return std::abs(a(i, 0) - b(j, 0));
  return (a.row(i) - b.row(j)).norm();
}

double row_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::VectorXd& y) {
  if (a.cols() == 1) return std::abs(a(i, 0) - y[0]);
  return (a.row(i).transpose() - y).norm();
}

// Coordinate ranks 1..n of one column with random tie-breaking.
std::vector<int> ranks_with_ties(const Eigen::MatrixXd& x, Eigen::Index col, RandomStream& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::uint64_t> keys(n);
  for (auto& k : keys) k = rng.engine()();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double va = x(static_cast<Eigen::Index>(a), col);
    const double vb = x(static_cast<Eigen::Index>(b), col);
    if (va != vb) return va < vb;
    return keys[a] < keys[b] || (keys[a] == keys[b] && a < b);
  });
  std::vector<int> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<int>(r + 1);
  return rank;
}

// d * prerank as an exact integer.
std::vector<long long> prerank_numerators(const Eigen::MatrixXd& x, RandomStream& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2 || x.cols() < 1) {
    throw std::invalid_argument("band depth needs at least two vectors of dimension >= 1");
  }
  const long long m = static_cast<long long>(n) - 1;
  const long long d = x.cols();
  std::vector<long long> num(n, m * d);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const auto rank = ranks_with_ties(x, k, rng);
    for (std::size_t i = 0; i < n; ++i) num[i] += (m + 1 - rank[i]) * (rank[i] - 1LL);
  }
  return num;
}

}  // namespace

double brier_score(double prob_leq_x, double y, double x) {
  if (!(prob_leq_x >= 0.0 && prob_leq_x <= 1.0)) {
    throw std::invalid_argument("brier_score: probability outside [0, 1]");
  }
  const double event = y <= x ? 1.0 : 0.0;
  return (event - prob_leq_x) * (event - prob_leq_x);
}

double crps_sample(std::span<const double> x, std::span<const double> x_prime, double y) {
  if (x.empty() || x.size() != x_prime.size()) {
    throw std::invalid_argument("crps_sample: samples must be non-empty and of equal size");
  }
  double to_obs = 0.0;
  double spread = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    to_obs += std::abs(x[j] - y);
    spread += std::abs(x[j] - x_prime[j]);
  }
  const double n = static_cast<double>(x.size());
  return to_obs / n - spread / (2.0 * n);
}

double crps_ensemble(std::span<const double> members, double y) {
  if (members.empty()) throw std::invalid_argument("crps_ensemble: empty ensemble");
  std::vector<double> f(members.begin(), members.end());
  std::sort(f.begin(), f.end());
  const double m = static_cast<double>(f.size());
  double to_obs = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    to_obs += std::abs(f[i] - y);
    // sum_i sum_j |f_i - f_j| = 2 sum_i (2i - M - 1) f_(i), 1-based i.
    pairs += (2.0 * static_cast<double>(i + 1) - m - 1.0) * f[i];
  }
  return to_obs / m - (2.0 * pairs) / (2.0 * m * m);
}

double energy_score(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                    const Eigen::VectorXd& y) {
  if (x.rows() < 1 || x.rows() != x_prime.rows() || x.cols() != x_prime.cols() ||
      x.cols() != y.size()) {
    throw std::invalid_argument("energy_score: dimension mismatch");
  }
  double to_obs = 0.0;
  double spread = 0.0;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    to_obs += row_distance(x, j, y);
    spread += row_distance(x, j, x_prime, j);
  }
  const double n = static_cast<double>(x.rows());
  return to_obs / n - spread / (2.0 * n);
}

double energy_score_ensemble(const Eigen::MatrixXd& members, const Eigen::VectorXd& y) {
  if (members.rows() < 1 || members.cols() != y.size()) {
    throw std::invalid_argument("energy_score_ensemble: dimension mismatch");
  }
  const Eigen::Index m = members.rows();
  double to_obs = 0.0;
  double pairs = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    to_obs += row_distance(members, i, y);
    for (Eigen::Index j = i + 1; j < m; ++j) pairs += 2.0 * row_distance(members, i, members, j);
  }
  const double md = static_cast<double>(m);
  return to_obs / md - pairs / (2.0 * md * md);
}

double euclidean_error(const Eigen::VectorXd& median, const Eigen::VectorXd& y) {
  if (median.size() != y.size()) throw std::invalid_argument("euclidean_error: size mismatch");
  if (y.size() == 1) return std::abs(median[0] - y[0]);
  return (median - y).norm();
}

SpatialMedian spatial_median(const Eigen::MatrixXd& x, double tolerance, int max_iterations) {
  if (x.rows() < 1) throw std::invalid_argument("spatial_median: empty sample");
  SpatialMedian out;
  Eigen::VectorXd current = x.colwise().mean().transpose();
  Eigen::VectorXd num(x.cols());
  Eigen::VectorXd resid(x.cols());
  for (int it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    num.setZero();
    resid.setZero();
    double inv_sum = 0.0;
    int coincident = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double dist = (x.row(i).transpose() - current).norm();
      if (dist <= 1e-300) {
        ++coincident;
        continue;
      }
      num += x.row(i).transpose() / dist;
      resid += (x.row(i).transpose() - current) / dist;
      inv_sum += 1.0 / dist;
    }
    if (inv_sum == 0.0) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd next = num / inv_sum;
    if (coincident > 0) {
      const double r = resid.norm();
      if (r <= coincident) {
        out.converged = true;
        break;
      }
      const double eta_r = coincident / r;
      next = (1.0 - eta_r) * next + eta_r * current;
    }
    const double step = (next - current).norm();
    current = next;
    if (step <= tolerance * std::max(1.0, current.norm())) {
      out.converged = true;
      break;
    }
  }
  out.median = current;
  return out;
}

double dawid_sebastiani(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                        const Eigen::VectorXd& y, double diagonal_jitter) {
  if (mu.size() != y.size() || sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
    throw std::invalid_argument("dawid_sebastiani: dimension mismatch");
  }
  Eigen::MatrixXd s = sigma;
  s.diagonal().array() += diagonal_jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("dawid_sebastiani: covariance is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) {
      throw std::runtime_error("dawid_sebastiani: covariance is not positive definite");
    }
    log_det += 2.0 * std::log(l(i, i));
  }
  const Eigen::VectorXd w = llt.matrixL().solve(y - mu);
  return log_det + w.squaredNorm();
}

double dawid_sebastiani_sample(const Eigen::MatrixXd& sample, const Eigen::VectorXd& y) {
  if (sample.rows() < 2) throw std::invalid_argument("dawid_sebastiani_sample: need >= 2 rows");
  const Eigen::VectorXd mu = sample.colwise().mean().transpose();
  const Eigen::MatrixXd centered = sample.rowwise() - mu.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(sample.rows() - 1);
  return dawid_sebastiani(mu, cov, y, kSampleCovarianceJitter);
}

Moments mixture_moments(std::span<const MultivariateComponent> components) {
  if (components.empty()) throw std::invalid_argument("mixture_moments: no components");
  const Eigen::Index d = components.front().mean.size();
  double total = 0.0;
  Moments out{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (const auto& c : components) {
    if (c.mean.size() != d || c.covariance.rows() != d || c.covariance.cols() != d) {
      throw std::invalid_argument("mixture_moments: dimension mismatch");
    }
    if (!(c.weight >= 0.0)) throw std::invalid_argument("mixture_moments: negative weight");
    total += c.weight;
    out.mean += c.weight * c.mean;
    out.covariance += c.weight * (c.covariance + c.mean * c.mean.transpose());
  }
  if (std::abs(total - 1.0) > 1e-10) {
    throw std::invalid_argument("mixture_moments: weights must sum to one");
  }
  out.covariance -= out.mean * out.mean.transpose();
  return out;
}

Histogram& Histogram::operator+=(const Histogram& other) {
  if (other.bins() != bins()) throw std::invalid_argument("histogram bin counts differ");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  return *this;
}

void write_histogram_csv(const Histogram& h, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "bin,count\n";
  for (std::size_t i = 0; i < h.bins(); ++i) out << (i + 1) << ',' << h.counts[i] << '\n';
}

Histogram read_histogram_csv(const std::filesystem::path& path) {
  const auto table = csv::read_table(path, "bin,count");
  Histogram h(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto f = csv::split(table.rows[i].second);
    if (f.size() != 2 || csv::parse_integer(f[0]) != static_cast<long long>(i + 1)) {
      throw LoadError(path.string() + ":" + std::to_string(table.rows[i].first) +
                      ": malformed histogram row");
    }
    h.counts[i] = static_cast<std::size_t>(csv::parse_integer(f[1]));
    h.total += h.counts[i];
  }
  return h;
}

double pit(const UnivariatePredictive& dist, double y) { return cdf(dist, y); }

Histogram pit_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("pit_histogram: need at least one bin");
  Histogram h(bins);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("pit value outside [0, 1]");
    h.add(std::min(static_cast<std::size_t>(v * static_cast<double>(bins)), bins - 1));
  }
  return h;
}

int verification_rank(std::span<const double> members, double y, RandomStream& rng) {
  if (members.empty()) throw std::invalid_argument("verification_rank: empty ensemble");
  std::size_t below = 0;
  std::size_t ties = 0;
  for (double f : members) {
    if (f < y) {
      ++below;
    } else if (f == y) {
      ++ties;
    }
  }
  const std::size_t extra = ties > 0 ? rng.index(ties + 1) : 0;
  return static_cast<int>(1 + below + extra);
}

Histogram rank_histogram(std::span<const int> ranks, int members) {
  Histogram h(static_cast<std::size_t>(members + 1));
  for (int r : ranks) {
    if (r < 1 || r > members + 1) throw std::invalid_argument("rank outside 1..M+1");
    h.add(static_cast<std::size_t>(r - 1));
  }
  return h;
}

std::vector<double> discretize(const UnivariatePredictive& dist, int members, RandomStream& rng) {
  std::vector<double> out(static_cast<std::size_t>(members));
  for (double& v : out) v = sample(dist, rng);
  return out;
}

std::vector<double> band_depth_preranks(const Eigen::MatrixXd& x, RandomStream& rng) {
  const auto num = prerank_numerators(x, rng);
  std::vector<double> out(num.size());
  for (std::size_t i = 0; i < num.size(); ++i) {
    out[i] = static_cast<double>(num[i]) / static_cast<double>(x.cols());
  }
  return out;
}

double band_depth_prerank(const Eigen::MatrixXd& x, Eigen::Index index, RandomStream& rng) {
  return band_depth_preranks(x, rng).at(static_cast<std::size_t>(index));
}

int band_depth_rank(const Eigen::MatrixXd& x, Eigen::Index observation, RandomStream& rng) {
  const auto num = prerank_numerators(x, rng);
  const long long obs = num.at(static_cast<std::size_t>(observation));
  std::size_t below = 0;
  std::size_t ties = 0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    if (static_cast<Eigen::Index>(i) == observation) continue;
    if (num[i] < obs) {
      ++below;
    } else if (num[i] == obs) {
      ++ties;
    }
  }
  const std::size_t extra = ties > 0 ? rng.index(ties + 1) : 0;
  return static_cast<int>(1 + below + extra);
}

double reliability_index(const Histogram& h) {
  if (h.total == 0) throw std::invalid_argument("reliability_index: empty histogram");
  const double uniform = 1.0 / static_cast<double>(h.bins());
  double ri = 0.0;
  for (std::size_t i = 0; i < h.bins(); ++i) ri += std::abs(h.frequency(i) - uniform);
  return ri;
}

IntervalOutcome interval_coverage_width(const UnivariatePredictive& dist, double y,
                                        double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("interval level must lie in (0, 1)");
  }
  IntervalOutcome out;
  out.lower = quantile(dist, 0.5 * (1.0 - level));
  out.upper = quantile(dist, 0.5 * (1.0 + level));
  out.width = out.upper - out.lower;
  out.covered = y >= out.lower && y <= out.upper;
  return out;
}

IntervalOutcome ensemble_range_interval(std::span<const double> members, double y) {
  if (members.empty()) throw std::invalid_argument("ensemble_range_interval: empty ensemble");
  const auto [lo, hi] = std::minmax_element(members.begin(), members.end());
  return {y >= *lo && y <= *hi, *hi - *lo, *lo, *hi};
}

double temp_difference_pit(const GaussianPredictive& pred_i, const GaussianPredictive& pred_j,
                           double rho, double observed_difference) {
  if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("temp_difference_pit: |rho| > 1");
  const double si = pred_i.sd();
  const double sj = pred_j.sd();
  const double var = si * si - 2.0 * rho * si * sj + sj * sj;
  if (!(var > kVarianceFloor)) {
    throw std::domain_error("temp_difference_pit: degenerate difference variance");
  }
  const GaussianPredictive diff(pred_i.mean() - pred_j.mean(), var);
  return diff.cdf(observed_difference);
}

double temp_difference_pit_ensemble(std::span<const double> predicted_differences,
                                    double observed_difference) {
  if (predicted_differences.empty()) {
    throw std::invalid_argument("temp_difference_pit_ensemble: empty ensemble");
  }
  return threshold_prob(predicted_differences, observed_difference);
}

double mad_from_half(std::span<const double> pit_values) {
  if (pit_values.empty()) throw std::invalid_argument("mad_from_half: no values");
  double s = 0.0;
  for (double v : pit_values) s += std::abs(v - 0.5);
  return s / static_cast<double>(pit_values.size());
}

ErrorSummary mae_rmse(std::span<const double> medians, std::span<const double> means,
                      std::span<const double> y) {
  if (medians.size() != y.size() || means.size() != y.size() || y.empty()) {
    throw std::invalid_argument("mae_rmse: size mismatch");
  }
  double ae = 0.0;
  double se = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ae += std::abs(medians[i] - y[i]);
    se += (means[i] - y[i]) * (means[i] - y[i]);
  }
  const double n = static_cast<double>(y.size());
  return {ae / n, std::sqrt(se / n)};
}

std::vector<double> composite_minimum(const ForecastFieldSample& fields,
                                      std::span<const std::size_t> subset) {
  if (subset.empty()) throw std::invalid_argument("composite_minimum: empty station subset");
  std::vector<double> out(static_cast<std::size_t>(fields.fields.rows()));
  for (Eigen::Index i = 0; i < fields.fields.rows(); ++i) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t s : subset) m = std::min(m, fields.fields(i, static_cast<Eigen::Index>(s)));
    out[static_cast<std::size_t>(i)] = m;
  }
  return out;
}

double threshold_prob(std::span<const double> values, double x) {
  if (values.empty()) throw std::invalid_argument("threshold_prob: no values");
  const auto n = std::count_if(values.begin(), values.end(), [x](double v) { return v <= x; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

void ScoreTable::add(std::string date, std::string unit, std::string method,
                     std::string score_name, std::optional<double> value) {
  if (value && !std::isfinite(*value)) value.reset();
  rows_.push_back(
      {std::move(date), std::move(unit), std::move(method), std::move(score_name), value});
}

void ScoreTable::append(const ScoreTable& other) {
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

void ScoreTable::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "date,unit,method,score_name,value\n";
  for (const auto& r : rows_) {
    out << r.date << ',' << r.unit << ',' << r.method << ',' << r.score_name << ','
        << csv::format_optional(r.value) << '\n';
  }
}

ScoreTable ScoreTable::read_csv(const std::filesystem::path& path) {
  const auto table = csv::read_table(path, "date,unit,method,score_name,value");
  ScoreTable out;
  for (const auto& [line, text] : table.rows) {
    const auto f = csv::split(text);
    if (f.size() != 5) {
      throw LoadError(path.string() + ":" + std::to_string(line) + ": expected 5 fields");
    }
    out.rows_.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]),
                         std::string(f[3]), csv::parse_optional_real(f[4])});
  }
  return out;
}

}  // namespace fieldcast
