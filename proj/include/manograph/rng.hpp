#pragma once

#include <cstdint>
#include <random>

#include "manograph/tensor.hpp"

namespace manograph {

/// Deterministic random source. The generator is std::mt19937_64, whose
/// output stream is pinned by the C++ standard, and all conversions to
/// floating point are done here with explicit arithmetic rather than the
/// implementation-defined <random> distributions, so a given seed yields
/// the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1): top 53 bits of the raw draw scaled by 2^-53.
  double uniform01();
  double uniform(double lo, double hi);
  // Integer uniform in [0, n) by rejection sampling (exact, unbiased).
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller on two uniform draws.
  double normal01();

  Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi);
  Tensor normal_tensor(std::vector<std::size_t> shape);

  // Derives an independent generator for a sub-task; mixes the key into
  // the parent seed with splitmix64 steps.
  Rng fork(std::uint64_t key) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace manograph
