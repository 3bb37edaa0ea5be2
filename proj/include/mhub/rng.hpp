#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace mhub {

// Seedable generator whose output sequence is fixed by the C++ standard
// (mt19937_64), with bounded-integer and unit-interval conversions done here
// rather than through std::*_distribution, whose algorithms are
// implementation-defined. Plans therefore reproduce across platforms.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t uniform_index(std::uint64_t n);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

// Fisher-Yates shuffle using Rng::uniform_index (std::shuffle's draw
// sequence is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

// Child seed for a numbered sub-stream (worker, restart, subspace, ...).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

// Child seed for a named sub-stream (e.g. a CLI subcommand).
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

}  // namespace mhub
