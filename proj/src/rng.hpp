#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace negprompt {

// Every random draw in the project comes from a (seed, stream, counter)
// tuple, so records can be generated in any order (or in parallel) and the
// result is identical to sequential generation.
enum class RngStream : uint64_t {
  EncoderWeights = 1,
  ClassTokens = 2,
  IdTrainNoise = 3,
  IdTestNoise = 4,
  OodTestNoise = 5,
  PositiveInit = 6,
  NegativeJitter = 7,
  GradCheck = 8,
  Shuffle = 9,
  Scratch = 100,
};

// SplitMix64 finalizer; full-period bijective mix.
uint64_t mix64(uint64_t x);

// Small counter-based generator (SplitMix64 stepping, Box-Muller normals).
// Not cryptographic; chosen for bit-exact reproducibility across platforms.
class Rng {
 public:
  Rng(uint64_t seed, RngStream stream, uint64_t counter = 0);

  uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double gaussian();                       // standard normal
  std::vector<double> gaussian_vec(std::size_t dim, double stddev = 1.0);

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace negprompt
