#pragma once

#include <cstdint>
#include <random>

namespace afford {

/// Deterministic random source. mt19937_64 is bit-exact across platforms;
/// the standard *distributions* are not, so the draws below are hand-rolled
/// to keep runs byte-reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0,n). Rejection sampling, no modulo bias.
  int uniform_int(int n);

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (pairwise; second value cached).
  double normal();

  /// Derive a decorrelated child seed for a named stream (splitmix64 mix).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace afford
