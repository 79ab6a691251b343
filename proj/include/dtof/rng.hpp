// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace dtof {

// Philox4x32-10 (Salmon et al., SC'11).
inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
  constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    uint64_t p0 = uint64_t(kM0) * ctr[0];
    uint64_t p1 = uint64_t(kM1) * ctr[2];
    uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
    uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline double u64_to_unit(uint64_t x) { return double(x >> 11) * 0x1.0p-53; }

enum class StreamRole : uint32_t {
  time = 0,
  primal = 1,
  replay = 1,  // replay reads the primal sequence
  independent = 2,
};

// Stateless, addressable stream: every (seed, pixel, pair, role, dim) names
// one Philox block holding two 53-bit uniforms.
class RngStream {
 public:
  RngStream() = default;
  RngStream(uint64_t seed, uint32_t pixel, uint32_t pair, uint32_t role)
      : key_{uint32_t(seed), uint32_t(seed >> 32)}, pixel_(pixel), pair_(pair), role_(role) {}
  RngStream(uint64_t seed, uint32_t pixel, uint32_t pair, StreamRole role)
      : RngStream(seed, pixel, pair, static_cast<uint32_t>(role)) {}

  std::array<uint32_t, 4> block(uint32_t dim) const { return philox4x32({pixel_, pair_, role_, dim}, key_); }

  std::pair<double, double> uniform2(uint32_t dim) const {
    auto b = block(dim);
    return {u64_to_unit((uint64_t(b[0]) << 32) | b[1]), u64_to_unit((uint64_t(b[2]) << 32) | b[3])};
  }
  double uniform(uint32_t dim) const { return uniform2(dim).first; }

  // Sequential draws on dims starting at 2^31, so they never alias addressed dims.
  double next() { return uniform(0x80000000u + counter_++); }

  uint32_t pixel() const { return pixel_; }
  uint32_t pair() const { return pair_; }
  uint32_t role() const { return role_; }
  RngStream with_role(uint32_t role) const { RngStream s = *this; s.role_ = role; s.counter_ = 0; return s; }

 private:
  std::array<uint32_t, 2> key_{0, 0};
  uint32_t pixel_ = 0, pair_ = 0, role_ = 0;
  uint32_t counter_ = 0;
};

// Dimension layout for path sampling: 16 purposes per path vertex.
namespace dim {
inline constexpr uint32_t kPerDepth = 16;
inline constexpr uint32_t kCameraJitter = 0;
inline constexpr uint32_t kBsdfDir = 1;
inline constexpr uint32_t kBsdfLobe = 2;
inline constexpr uint32_t kLightPick = 3;
inline constexpr uint32_t kLightPos = 4;
inline constexpr uint32_t at(int depth, uint32_t purpose) { return uint32_t(depth) * kPerDepth + purpose; }
}  // namespace dim

}  // namespace dtof
