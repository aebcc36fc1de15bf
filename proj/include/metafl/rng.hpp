#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace metafl {

// Deterministic RNG stream. Distribution transforms are hand-rolled so that
// output depends only on the seed, not on the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the spare deviate is cached.
  double normal();

  // Uniform in {0, ..., n-1} without modulo bias.
  std::size_t uniform_index(std::size_t n);

  // k distinct indices from {0, ..., n-1}, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 step; used to derive independent child seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t seed);

// Derives a child seed from (seed, stream tag). Distinct tags give streams
// that are independent for all practical purposes.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace metafl
