#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "fieldcast/types.hpp"

namespace fieldcast {

// Named, seeded pseudo-random stream.
//
// Identical (seed, label) pairs produce bit-identical draw sequences; distinct
// labels under the same seed are decorrelated through a hash of the label.
// A stream is single-consumer.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  // Child stream "<label>/<sub>" under the same seed.
  RandomStream derive(std::string_view sub) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

RandomStream seeded_rng(std::uint64_t seed, std::string_view stream);

double sample(const UnivariatePredictive& dist, RandomStream& rng);

}  // namespace fieldcast
