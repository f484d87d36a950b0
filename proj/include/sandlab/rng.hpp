#pragma once

#include <cstdint>

namespace sandlab {

// xoshiro256** with splitmix64 seeding. Streams derived from (seed, stream_id)
// are statistically independent, so parallel trials can each own one without
// coordination.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform in [0, n).
  std::uint64_t uniform(std::uint64_t n);

  /// Uniform in [0, 1).
  double uniform01();

  static const char* name() { return "xoshiro256** / splitmix64"; }

 private:
  std::uint64_t s_[4];
};

}  // namespace sandlab
