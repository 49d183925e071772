// Copyright 2026 The HoHoNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

namespace hoho {

/// splitmix64. The one RNG of the project; every randomized artifact (scene
/// parameters, weight init, shuffles, augmentation angles) draws from a
/// stream derived with mix_seed so results are reproducible from the seed
/// alone, on any platform.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1) via 53-bit mantissa scaling.
  double next_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_real(); }

  /// Uniform integer in [0, n). n must be positive.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

/// Stateless scramble used for stream derivation (the splitmix64 output
/// function applied to a value).
inline uint64_t sm_scramble(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Purpose tags for derived streams.
enum class RngStream : uint64_t {
  kScene = 1,
  kInit = 2,
  kShuffle = 3,
  kAugment = 4,
  kTest = 5,
};

/// seed' = mix(seed, purpose, index). Documented recipe:
///   z = scramble(seed ^ (GOLDEN * (purpose + 1)))
///   z = scramble(z ^ (MIXER * (index + 1)))
inline uint64_t mix_seed(uint64_t seed, RngStream purpose, uint64_t index) {
  uint64_t z = sm_scramble(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<uint64_t>(purpose) + 1)));
  z = sm_scramble(z ^ (0xBF58476D1CE4E5B9ULL * (index + 1)));
  return z;
}

inline SplitMix64 make_stream(uint64_t seed, RngStream purpose, uint64_t index) {
  return SplitMix64(mix_seed(seed, purpose, index));
}

}  // namespace hoho
