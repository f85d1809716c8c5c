#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace layersim {

/// SplitMix64 stream. The algorithm is fixed so that a seed reproduces the
/// same sequence on every platform; nothing here depends on <random>
/// distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); unbiased (rejection sampling). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal via Box-Muller; the spare deviate is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) { shuffle(std::span<T>(items)); }

  /// Independent child stream; the parent's state is not advanced.
  Rng derive(std::uint64_t stream) const;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; also used for sub-seed derivation and hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace layersim
