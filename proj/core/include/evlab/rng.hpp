#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace evlab {

/// xoshiro256** generator seeded through splitmix64.
///
/// All derived draws (uniform, normal, integer, shuffle) are implemented here
/// rather than through <random> distributions, whose outputs are
/// implementation-defined. The stream is therefore identical on every
/// platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (pairs are cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  /// Independent child stream; deterministic in (parent state, tag).
  Rng fork(std::uint64_t tag);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace evlab
