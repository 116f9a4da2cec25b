#pragma once

#include <cstdint>
#include <random>

namespace csens {

// splitmix64 finalizer; mixes (seed, index) into independent substream seeds
// so bootstrap draws are reproducible regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class SubstreamRng {
 public:
  explicit SubstreamRng(std::uint64_t seed) : engine_(seed) {}
  SubstreamRng(std::uint64_t seed, std::uint64_t index) : engine_(mix_seed(seed, index)) {}

  std::uint64_t next() { return engine_(); }

  // Unbiased bounded draw (multiply-shift with rejection).
  std::uint64_t bounded(std::uint64_t n) {
    while (true) {
      const std::uint64_t v = next();
      const __uint128_t m = static_cast<__uint128_t>(v) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (0ULL - n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  // Standard normal via inverse-CDF-free polar method would break stream
  // discipline on rejection counts across platforms; Box-Muller is exact here.
  double normal() {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double uniform01() {  // [0,1)
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform01_open() {  // (0,1]
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace csens
