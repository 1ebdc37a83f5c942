// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Portable random streams. Distribution code lives here rather than in
// <random> so that sequences are identical across standard libraries.

#ifndef DRTS_RNG_HPP
#define DRTS_RNG_HPP

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace drts {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// Derives independent named streams from one root seed.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t root) : root_(root) {}
  std::uint64_t root() const noexcept { return root_; }
  std::uint64_t seed_for(std::string_view stream) const;
  Rng stream(std::string_view name) const { return Rng(seed_for(name)); }

 private:
  std::uint64_t root_;
};

}  // namespace drts

#endif  // DRTS_RNG_HPP
