#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace grpolab::rng {

// FNV-1a, used to fold record ids into stream seeds.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent deterministic stream per (seed, step, slot, record id), so
// sampling order across records cannot perturb reproducibility.
inline std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t step,
                                  std::uint64_t slot, std::string_view record_id) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(step));
  h = splitmix64(h ^ splitmix64(slot));
  h = splitmix64(h ^ fnv1a(record_id));
  return std::mt19937_64(h);
}

// Uniform double in [0, 1) built directly from engine output; avoids the
// implementation-defined std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

// Index draw from an explicit probability vector. Zero-probability entries
// are never selected.
inline int categorical(std::span<const double> probs, double u) {
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last_positive = static_cast<int>(i);
    if (u < cum) return last_positive;
  }
  return last_positive;  // rounding left u >= cum; take the final outcome
}

}  // namespace grpolab::rng
