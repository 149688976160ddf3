#pragma once

#include <cstdint>
#include <random>

namespace mergesim {

/// Seeded generator with a platform-independent uniform mapping.
/// std::uniform_real_distribution is implementation-defined, so draws go
/// through the top 53 bits of mt19937_64 directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mergesim
