#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aftlab {

/// Derives a child seed from a root seed, a stage tag, and up to two indices.
/// This is the single seed-splitting rule used everywhere: every stage of a
/// run (init, shuffle, attack, ...) gets its own derived stream, so runs are
/// reproducible component by component.
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

/// Deterministic random stream. Draws are built from raw mt19937_64 output
/// (never through std distributions, whose sequences vary across standard
/// library implementations), so identical seeds give identical streams on
/// every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Box-Muller; consumes exactly two draws per call.
  double normal(double mean, double stddev);

  /// Uniform integer in [0, n).
  int64_t below(int64_t n);

 private:
  std::mt19937_64 gen_;
};

}  // namespace aftlab
