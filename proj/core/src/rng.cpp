#include "afford/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace afford {

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int requires n > 0");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u in (0,1] so log is finite.
  double u = 1.0 - uniform01();
  double v = uniform01();
  double r = std::sqrt(-2.0 * std::log(u));
  double a = 2.0 * std::numbers::pi * v;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace afford
