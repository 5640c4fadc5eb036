// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace brainstack {

// Counter-based splittable generator built on the SplitMix64 mixer. Streams
// derived via split() are independent of draw order, which keeps dataset
// generation, parameter init and dropout masks reproducible no matter how the
// call sites are reorganized.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x6a09e667f3bcc909ull)) {}

  // Child stream keyed by an integer. Does not advance this stream.
  Rng split(uint64_t key) const { return Rng(from_state(mix(state_ ^ mix(key + 0x9e3779b97f4a7c15ull)))); }

  // Child stream keyed by a label. Does not advance this stream.
  Rng split(std::string_view label) const {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return Rng(from_state(mix(state_ ^ h)));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one draw per call, no cached pair, so the
  // stream state never depends on call parity.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  uint64_t below(uint64_t n) {
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  struct FromState {};
  Rng(FromState, uint64_t s) : state_(s) {}
  static Rng from_state(uint64_t s) { return Rng(FromState{}, s); }

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t state_;
};

}  // namespace brainstack
