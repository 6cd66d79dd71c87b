#include "fieldcast/ecc.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace fieldcast {

std::vector<double> ecc_quantiles(const UnivariatePredictive& dist, int members) {
  if (members < 1) throw std::invalid_argument("ecc_quantiles: need at least one member");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(members));
  for (int m = 1; m <= members; ++m) {
    out.push_back(quantile(dist, static_cast<double>(m) / (members + 1)));
  }
  // Bisection noise must not break the ordering.
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1]);
  return out;
}

RankPermutation rank_permutation(std::span<const double> raw, RandomStream& rng) {
  const std::size_t m = raw.size();
  std::vector<std::uint64_t> keys(m);
  for (auto& k : keys) k = rng.engine()();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (raw[a] != raw[b]) return raw[a] < raw[b];
    return keys[a] < keys[b] || (keys[a] == keys[b] && a < b);
  });
  RankPermutation out;
  out.tie_seed = rng.seed();
  out.ranks.resize(m);
  for (std::size_t r = 0; r < m; ++r) out.ranks[order[r]] = static_cast<int>(r + 1);
  return out;
}

ForecastFieldSample ecc_reorder(const std::vector<std::vector<double>>& quantiles,
                                const std::vector<RankPermutation>& permutations,
                                std::vector<std::string> station_order) {
  const std::size_t ns = quantiles.size();
  if (permutations.size() != ns || station_order.size() != ns) {
    throw std::invalid_argument("ecc_reorder: station count mismatch");
  }
  const std::size_t members = ns > 0 ? quantiles.front().size() : 0;
  ForecastFieldSample out;
  out.station_order = std::move(station_order);
  out.provenance = Provenance::kEcc;
  out.seed = ns > 0 ? permutations.front().tie_seed : 0;
  out.fields.resize(static_cast<Eigen::Index>(members), static_cast<Eigen::Index>(ns));
  for (std::size_t s = 0; s < ns; ++s) {
    if (quantiles[s].size() != members || permutations[s].ranks.size() != members) {
      throw std::invalid_argument("ecc_reorder: member count mismatch");
    }
    for (std::size_t m = 0; m < members; ++m) {
      const int rank = permutations[s].ranks[m];
      if (rank < 1 || static_cast<std::size_t>(rank) > members) {
        throw std::invalid_argument("ecc_reorder: rank out of range");
      }
      out.fields(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(s)) =
          quantiles[s][static_cast<std::size_t>(rank - 1)];
    }
  }
  return out;
}

}  // namespace fieldcast
