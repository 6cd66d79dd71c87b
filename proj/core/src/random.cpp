#include "fieldcast/random.hpp"

#include <array>
#include <cmath>
#include <variant>

namespace fieldcast {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::string_view label) {
  std::uint64_t state = seed ^ fnv1a(label);
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); i += 2) {
    const std::uint64_t v = splitmix64(state);
    words[i] = static_cast<std::uint32_t>(v);
    words[i + 1] = static_cast<std::uint32_t>(v >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::string_view label)
    : seed_(seed), label_(label), engine_(make_engine(seed, label)) {}

double RandomStream::uniform() {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(engine_);
    if (u > 0.0 && u < 1.0) return u;
  }
}

double RandomStream::normal() { return normal_(engine_); }

std::size_t RandomStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

RandomStream RandomStream::derive(std::string_view sub) const {
  std::string child = label_;
  child.push_back('/');
  child.append(sub);
  return RandomStream(seed_, child);
}

RandomStream seeded_rng(std::uint64_t seed, std::string_view stream) {
  return RandomStream(seed, stream);
}

double sample(const UnivariatePredictive& dist, RandomStream& rng) {
  if (const auto* g = std::get_if<GaussianPredictive>(&dist)) {
    return g->mean() + g->sd() * rng.normal();
  }
  const auto& mix = std::get<MixturePredictive>(dist);
  const auto comps = mix.components();
  double u = rng.uniform();
  std::size_t pick = comps.size() - 1;
  for (std::size_t m = 0; m < comps.size(); ++m) {
    if (u < comps[m].weight) {
      pick = m;
      break;
    }
    u -= comps[m].weight;
  }
  return comps[pick].mean + std::sqrt(comps[pick].variance) * rng.normal();
}

}  // namespace fieldcast
