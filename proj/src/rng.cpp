#include "evgs/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace evgs {

namespace {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over the stream label, folded into the seed.
inline uint64_t hash_label(std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : label) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Guard u1 > 0 so the log stays finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Rng::uniform_index(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be >= 1");
  // Rejection sampling over the largest multiple of n below 2^64.
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

Rng substream(uint64_t seed, std::string_view stream_id, uint64_t counter) {
  uint64_t mix = seed;
  mix ^= hash_label(stream_id) + 0x9e3779b97f4a7c15ull + (mix << 6) + (mix >> 2);
  mix ^= counter + 0x9e3779b97f4a7c15ull + (mix << 6) + (mix >> 2);
  // One warm-up round decorrelates nearby (seed, counter) pairs.
  splitmix64(mix);
  return Rng(mix);
}

}  // namespace evgs
