#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tractloop {

/// Seedable generator whose output is identical on every platform.
///
/// The engine is std::mt19937_64 (its sequence is fixed by the standard); all
/// derived distributions are implemented here because the standard library
/// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Mixes a seed with a stream index (splitmix64 finalizer) so that streams
/// derived from one master seed are decorrelated.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// k distinct values from [0, n) in draw order (sparse Fisher-Yates, O(k)).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

template <typename T>
void shuffle(std::span<T> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace tractloop
