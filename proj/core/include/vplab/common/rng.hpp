#pragma once

#include <cstdint>
#include <random>

#include "vplab/common/tensor.hpp"

namespace vplab {

// Distribution code is written out here rather than using <random>'s
// distributions: their output is implementation-defined, and shipped
// fixtures must reproduce across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev);
  Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace vplab
