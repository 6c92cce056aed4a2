#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "restless_bai/errors.hpp"

namespace restless_bai {

// One splitmix64 step. Reference: Steele, Lea, Flood (2014).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Seed derivation used everywhere: mix_seed(mix_seed(master, trial), stream).
// Keyed splitmix64 so that nearby trial indices give unrelated streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ull * (key + 1));
  return splitmix64(s);
}

// Per-trial stream ids. Each consumer owns one engine so that adding draws to
// one stream never shifts another (stopping checks draw nothing).
enum class Stream : std::uint64_t {
  kArmNoise = 0,    // hidden chain transitions, one draw per arm per tick
  kPolicy = 1,      // action sampling
  kTieBreak = 2,    // recommendation tie-break
  kInitState = 3,   // initial hidden states
};

inline std::mt19937_64 make_engine(std::uint64_t master_seed, std::uint64_t trial,
                                   Stream stream) {
  return std::mt19937_64(
      mix_seed(mix_seed(master_seed, trial), static_cast<std::uint64_t>(stream)));
}

// Uniform in [0, 1) from the top 53 bits; avoids std::uniform_real_distribution
// so the draw sequence is pinned down by the engine alone.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Inverse-CDF draw from an unnormalized weight vector.
inline int sample_index(std::span<const double> weights, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) throw ValidationError("sample_index: nonpositive total weight");
  double target = u * total;
  double acc = 0.0;
  int last_positive = -1;
  for (int k = 0; k < static_cast<int>(weights.size()); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last_positive = k;
    if (target < acc) return k;
  }
  return last_positive;  // u rounded onto the upper edge
}

}  // namespace restless_bai
