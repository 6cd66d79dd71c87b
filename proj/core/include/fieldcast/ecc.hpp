#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fieldcast/random.hpp"
#include "fieldcast/types.hpp"

namespace fieldcast {

// Quantiles at levels m / (M + 1), m = 1..M, in non-decreasing order.
std::vector<double> ecc_quantiles(const UnivariatePredictive& dist, int members);

// Ranks (1-based) of the raw member values at one station, ties broken by
// the supplied stream.
struct RankPermutation {
  std::vector<int> ranks;
  std::uint64_t tie_seed = 0;
};

RankPermutation rank_permutation(std::span<const double> raw, RandomStream& rng);

// Field m at station s takes the ranks[s][m]-th smallest quantile of s, so
// each output member keeps its raw rank at every station.
ForecastFieldSample ecc_reorder(const std::vector<std::vector<double>>& quantiles,
                                const std::vector<RankPermutation>& permutations,
                                std::vector<std::string> station_order);

}  // namespace fieldcast
