#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lodfm {

/// Seeded random source with self-contained draw algorithms.
///
/// std::mt19937_64's output stream is fully specified by the standard, but the
/// standard distributions are not, so bounded draws, unit doubles, normals and
/// shuffles are implemented here. Identical seeds give identical results on
/// every platform, which the reproducibility contracts rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n) {
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % range);
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Box-Muller transform; draws two words per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double two_pi = 6.283185307179586476925286766559;
    double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;       // [0,1)
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stable derivation of per-purpose seeds from one experiment seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace lodfm
