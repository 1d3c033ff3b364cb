#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace freqmrn {

/// Seeded 64-bit Mersenne Twister with a serializable state.
///
/// All stochastic parts of the library (initialization, shuffling, dropout)
/// draw from an explicit Rng so that runs replay bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) built from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace freqmrn
