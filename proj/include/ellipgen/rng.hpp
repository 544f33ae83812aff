#ifndef ELLIPGEN_RNG_HPP
#define ELLIPGEN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "ellipgen/core.hpp"

namespace ellipgen {

/// One splitmix64 step; used for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and up to two indices.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t i, std::uint64_t j = 0) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ULL * (i + 1);
  std::uint64_t b = splitmix64(s);
  s ^= 0xbf58476d1ce4e5b9ULL * (j + 1);
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

/// Deterministic random source. The engine is mt19937_64 (bit-reproducible by
/// the standard); uniform and normal variates are produced by explicit
/// transforms so that streams do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; one spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double th = 2.0 * kPi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  /// Independent child stream.
  Rng spawn(std::uint64_t stream) {
    return Rng(derive_seed(engine_(), stream));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ellipgen

#endif  // ELLIPGEN_RNG_HPP
