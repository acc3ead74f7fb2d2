#pragma once

// Seeded random streams. Every trial index gets its own generator, seeded from
// (base seed, index) through splitmix64, so batches can run in any order.

#include <cmath>
#include <cstdint>
#include <random>

namespace ricci::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ index);
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}
  Stream(std::uint64_t base, std::uint64_t index) : gen_(derive_seed(base, index)) {}

  /// Uniform in [0, 1), built from the top 53 bits so that values do not depend
  /// on the standard library's distribution implementation.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Log-uniform in [lo, hi], lo > 0.
  double log_uniform(double lo, double hi) { return lo * std::pow(hi / lo, uniform()); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace ricci::rng
