#pragma once

// Portable seeded randomness. The standard distributions are
// implementation-defined, so index draws, shuffles and real draws are done
// here on top of the (fully specified) mt19937_64 engine. That keeps runs
// bit-reproducible across standard libraries.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace modee {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic seed for a sub-stream, e.g. derive_seed(seed, {epoch, doc}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salt);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n); n > 0.
  std::uint64_t index(std::uint64_t n);
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from [0, n) in random order (partial Fisher-Yates).
  std::vector<int> sample(int n, int k);

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(index(v.size()))];
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace modee
