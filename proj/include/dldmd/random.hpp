#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dldmd {

// All randomness goes through std::mt19937_64, whose output sequence is fixed
// by the standard. The standard distributions are not, so uniform variates and
// shuffles are computed here directly. Per-item streams are seeded with
// SplitMix64(seed, stream) so results do not depend on generation order.

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace dldmd
