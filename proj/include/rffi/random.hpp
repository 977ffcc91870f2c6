#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace rffi {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a child seed from a root seed and a path of integer tags.
/// Streams keyed by distinct paths are statistically independent, and the
/// derivation depends only on the values, never on call order.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept;

/// Seeded noise source. Uniform and Gaussian conversions are implemented here
/// rather than taken from <random> distributions so streams are reproducible
/// across standard library implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, cached pair).
  double normal();
  /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance);

  RngStream fork(std::uint64_t tag) { return RngStream(derive_seed(next_u64(), {tag})); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rffi
