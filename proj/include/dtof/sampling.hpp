// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "dtof/core.hpp"
#include "dtof/rng.hpp"

namespace dtof {

enum class TimeStrategy { uniform, stratified, shifted, mirrored, decorrelated_stratified };

inline std::string_view to_string(TimeStrategy s) {
  switch (s) {
    case TimeStrategy::uniform: return "uniform";
    case TimeStrategy::stratified: return "stratified";
    case TimeStrategy::shifted: return "shifted";
    case TimeStrategy::mirrored: return "mirrored";
    case TimeStrategy::decorrelated_stratified: return "decorrelated";
  }
  return "?";
}

inline TimeStrategy time_strategy_from_string(std::string_view s) {
  if (s == "uniform") return TimeStrategy::uniform;
  if (s == "stratified") return TimeStrategy::stratified;
  if (s == "shifted" || s == "shifted-antithetic") return TimeStrategy::shifted;
  if (s == "mirrored" || s == "mirrored-antithetic") return TimeStrategy::mirrored;
  if (s == "decorrelated" || s == "decorrelated-stratified") return TimeStrategy::decorrelated_stratified;
  throw Error("unknown time strategy '" + std::string(s) + "'");
}

inline double default_shift(TimeStrategy s, double T) { return s == TimeStrategy::shifted ? 0.5 * T : 0.0; }

struct TimePair {
  double t_primal = 0.0;
  double t_antithetic = 0.0;
  TimeStrategy strategy = TimeStrategy::uniform;
  double t_s = 0.0;
  double pdf_primal = 0.0;
  double pdf_antithetic = 0.0;
  bool swapped = false;
};

// Whether the antithetic map sends [0, T/2) onto [T/2, T), which permits
// stratifying primals over the left half only.
inline bool maps_left_half_to_right(TimeStrategy s, double t_s, double T) {
  if (s == TimeStrategy::shifted) return std::abs(t_s - 0.5 * T) <= 1e-12 * T;
  if (s == TimeStrategy::mirrored) return t_s <= 1e-12 * T || std::abs(t_s - T) <= 1e-12 * T;
  return s == TimeStrategy::stratified || s == TimeStrategy::decorrelated_stratified;
}

namespace time_dim {
inline constexpr uint32_t kPrimal = 0;   // (jitter, swap coin)
inline constexpr uint32_t kPartner = 1;  // (jitter, unused)
inline constexpr uint32_t kPermutationPair = 0xFFFFFFFFu;
}  // namespace time_dim

// Per-pixel random permutation of stratum indices, drawn from the time stream.
inline std::vector<uint32_t> stratum_permutation(uint32_t n, uint64_t seed, uint32_t pixel) {
  std::vector<uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  RngStream rng(seed, pixel, time_dim::kPermutationPair, StreamRole::time);
  for (uint32_t i = n; i > 1; --i) {
    uint32_t j = std::min(i - 1, uint32_t(rng.uniform(i) * i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

// Draws the time pair of pair index i. `rng` must be the time-role stream of
// that pair; `perm` is required only for the decorrelated strategy.
inline TimePair sample_time(TimeStrategy s, uint32_t i, uint32_t n_pairs, double T, double t_s, const RngStream& rng,
                            const std::vector<uint32_t>* perm = nullptr) {
  if (i >= n_pairs) throw Error("pair index out of range");
  if (!(t_s >= 0.0 && t_s <= T)) throw Error("t_s must lie in [0, T]");
  auto [jitter, coin] = rng.uniform2(time_dim::kPrimal);
  double jitter2 = rng.uniform(time_dim::kPartner);

  TimePair p;
  p.strategy = s;
  p.t_s = t_s;
  p.pdf_primal = p.pdf_antithetic = 1.0 / T;

  double a = 0.0, b = 0.0;
  const double half = 0.5 * T / n_pairs;
  switch (s) {
    case TimeStrategy::uniform:
      a = jitter * T;
      b = jitter2 * T;
      break;
    case TimeStrategy::stratified:
      a = (i + jitter) * half;
      b = 0.5 * T + (i + jitter2) * half;
      break;
    case TimeStrategy::decorrelated_stratified: {
      if (!perm || perm->size() != n_pairs) throw Error("decorrelated sampling needs a stratum permutation");
      a = (i + jitter) * half;
      b = 0.5 * T + ((*perm)[i] + jitter2) * half;
      break;
    }
    case TimeStrategy::shifted:
    case TimeStrategy::mirrored: {
      if (maps_left_half_to_right(s, t_s, T)) a = (i + jitter) * half;
      else a = (i + jitter) * T / n_pairs;
      b = s == TimeStrategy::shifted ? wrap_time(a + t_s, T) : wrap_time(-a + t_s, T);
      break;
    }
  }
  a = wrap_time(a, T);
  b = wrap_time(b, T);
  p.swapped = coin >= 0.5;
  p.t_primal = p.swapped ? b : a;
  p.t_antithetic = p.swapped ? a : b;
  return p;
}

inline TimePair sample_time_decorrelated_stratified(uint32_t i, uint32_t n_pairs, double T, const RngStream& rng,
                                                    const std::vector<uint32_t>& perm) {
  return sample_time(TimeStrategy::decorrelated_stratified, i, n_pairs, T, 0.0, rng, &perm);
}

inline std::vector<double> periodic_times(double t_p, int n_t, double T) {
  std::vector<double> ts(n_t);
  for (int k = 0; k < n_t; ++k) ts[k] = wrap_time(t_p + k * T / n_t, T);
  return ts;
}

struct PeriodicSample {
  std::vector<double> times;  // slot order: times[k] = t_0 + kT/N_t
  int primal_slot = 0;
};

// N_t-periodic antithetic set for pair i; the base time is stratified over
// [0, T/N_t) so all N = N_t·N_pairs strata are covered once.
inline PeriodicSample sample_time_periodic(int n_t, uint32_t i, uint32_t n_pairs, double T, const RngStream& rng) {
  if (n_t < 2 || (n_t & (n_t - 1)) != 0) throw Error("N_t must be a power of two >= 2");
  if (i >= n_pairs) throw Error("pair index out of range");
  auto [jitter, coin] = rng.uniform2(time_dim::kPrimal);
  PeriodicSample s;
  s.times = periodic_times((i + jitter) * T / (double(n_t) * n_pairs), n_t, T);
  s.primal_slot = std::min(n_t - 1, int(coin * n_t));
  return s;
}

// ---------------------------------------------------------------------------
// Direction and shape warps.

struct Vec2 {
  double x = 0, y = 0;
};

inline Vec3 sample_cosine_hemisphere(double u1, double u2) {
  double r = std::sqrt(u1);
  double phi = kTwoPi * u2;
  return {r * std::cos(phi), r * std::sin(phi), safe_sqrt(1.0 - u1)};
}

inline double cosine_hemisphere_pdf(double cos_theta) { return cos_theta > 0 ? cos_theta * kInvPi : 0.0; }

}  // namespace dtof
