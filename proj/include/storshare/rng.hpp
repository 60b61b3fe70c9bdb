// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "storshare/math.hpp"

namespace storshare::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer; the workhorse behind every stream here.
inline constexpr std::uint64_t fmix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

/// Counter-based stream keyed by (seed, stream id, salt). Streams for
/// different days are independent of evaluation order, which makes sampling
/// reproducible under any parallel schedule.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t salt = 0)
      : state_(fmix64(fmix64(seed + kGolden) ^
                      fmix64(stream_id * 0xd1342543de82ef95ULL + salt + kGolden))) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return fmix64(state_);
  }

  /// Uniform draw on the open interval (0,1).
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  double next_normal() { return math::normal_quantile(next_unit()); }

 private:
  std::uint64_t state_;
};

/// One independent stream per simulated day.
inline Stream day_stream(std::uint64_t seed, std::uint64_t day, std::uint64_t salt = 0) {
  return Stream(seed, day, salt);
}

/// Poisson(1) count by CDF inversion; used for bootstrap day weights.
inline int poisson1(std::uint64_t bits) {
  static constexpr double cum[] = {
      0.36787944117144233, 0.7357588823428847, 0.9196986029286058,
      0.9810118431238462,  0.9963401531726563, 0.9994058151824183,
      0.9999167588507119,  0.9999897508033253, 0.9999988747974021,
      0.9999998885745217,  0.9999999899522336, 0.9999999991683892};
  const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
  int k = 0;
  while (k < 12 && u > cum[k]) ++k;
  return k;
}

}  // namespace storshare::rng
