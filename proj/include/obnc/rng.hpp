#pragma once

#include <cstdint>
#include <initializer_list>

#include "obnc/linalg.hpp"

namespace obnc {

/// Counter-based generator: draw k is a SplitMix64 finalizer applied to
/// (key, k), so streams are reproducible on every platform and draws can be
/// addressed directly. Gaussians come from Box-Muller on pairs of uniforms.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double gaussian();

  /// d x q matrix of standard normals, filled column-major.
  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derives a child seed from a base seed and a list of indices.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

}  // namespace obnc
