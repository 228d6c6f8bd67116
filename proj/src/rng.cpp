#include "aftlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aftlab {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b) {
  uint64_t h = splitmix64(seed ^ fnv1a64(tag));
  h = splitmix64(h ^ (a + 0x9e3779b97f4a7c15ull));
  h = splitmix64(h ^ (b + 0x7f4a7c159e3779b9ull));
  return h;
}

double Rng::normal(double mean, double stddev) {
  // u1 in (0,1] so the log is finite.
  double u1 = 1.0 - uniform01();
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

int64_t Rng::below(int64_t n) {
  if (n <= 0) throw std::invalid_argument("Rng::below requires n > 0");
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

}  // namespace aftlab
