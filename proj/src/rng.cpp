#include "tractloop/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "tractloop/error.hpp"

namespace tractloop {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Rng::below: empty range");
  // Rejection sampling on the top of the range keeps the result unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw InvalidArgument("cannot sample " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<std::size_t> out;
  out.reserve(k);
  // Virtual array a[i] = i with swaps recorded sparsely.
  std::unordered_map<std::size_t, std::size_t> swapped;
  swapped.reserve(2 * k);
  auto value_at = [&](std::size_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    const std::size_t vi = value_at(i);
    const std::size_t vj = value_at(j);
    out.push_back(vj);
    swapped[j] = vi;
  }
  return out;
}

}  // namespace tractloop
