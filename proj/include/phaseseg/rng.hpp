#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace phaseseg {

/// 64-bit FNV-1a; used for seed derivation and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent stream seed for a named component from the root
/// seed: splitmix64(root ^ fnv1a64(component)). All randomness in the
/// framework is drawn from seeds produced this way.
std::uint64_t derive_seed(std::uint64_t root, std::string_view component) noexcept;

/// Thin wrapper over mt19937_64 with distribution code written out by hand so
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);

  /// Uniform double in [0, 1).
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace phaseseg
