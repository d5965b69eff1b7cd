// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace scenediff {

// Deterministic random source. Distributions are implemented here rather than
// through <random>'s distribution classes so that sequences are fixed by the
// engine alone and the full state serializes to a string.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Box-Muller; consumes two draws per call, no cached spare.
  double normal();
  // Uniform integer in [lo, hi] by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
  }

  // Independent child stream derived from this generator's seed material.
  Rng fork(std::uint64_t stream);

  std::string state() const;
  void set_state(const std::string& text);

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::mt19937_64 engine_;
};

}  // namespace scenediff
