#pragma once

#include <cstdint>
#include <random>

namespace manifold_calib {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream + 0x632BE59BD9B4E019ull));
}

/// Deterministic generator. Draws are bit-identical across platforms because
/// the real-valued mapping does not go through <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::uint64_t index(std::uint64_t n) { return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace manifold_calib
