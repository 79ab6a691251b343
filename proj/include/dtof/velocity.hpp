// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "dtof/analytic.hpp"
#include "dtof/core.hpp"
#include "dtof/image.hpp"
#include "dtof/modulation.hpp"
#include "dtof/quadrature.hpp"

namespace dtof {

struct Measurement {
  ModulationConfig config;
  Image buffer;
};

struct VelocityMap {
  Image speed;                 // effective radial speed (m/s)
  Image ratio;                 // r (Heide) or r₂ (Hu)
  std::vector<uint8_t> valid;  // 1 where the normalizer passes the threshold

  double valid_fraction() const {
    if (valid.empty()) return 0.0;
    return double(std::count(valid.begin(), valid.end(), uint8_t(1))) / valid.size();
  }
};

inline constexpr double kNormalizerThreshold = 1e-3;

// Doppler shift Δω of a path whose length grows at dτ/dt; Δω = −ω_g dτ/dt.
inline double doppler_shift(double u, double omega_g) { return -2.0 * u * omega_g / kSpeedOfLight; }
inline double speed_from_doppler(double d_omega, double omega_g) { return -d_omega * kSpeedOfLight / (2.0 * omega_g); }

// Per-pixel validity: |n| ≥ threshold · median |n|.
inline std::vector<uint8_t> normalizer_mask(const Image& n, double rel = kNormalizerThreshold) {
  std::vector<double> mags(n.size());
  for (size_t i = 0; i < n.size(); ++i) mags[i] = std::abs(n.data[i]);
  std::vector<double> sorted = mags;
  double median = 0.0;
  if (!sorted.empty()) {
    auto mid = sorted.begin() + sorted.size() / 2;
    std::nth_element(sorted.begin(), mid, sorted.end());
    median = *mid;
  }
  std::vector<uint8_t> valid(n.size());
  for (size_t i = 0; i < n.size(); ++i) valid[i] = mags[i] > 0.0 && mags[i] >= rel * median;
  return valid;
}

namespace detail {

inline void check_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error("velocity: buffer resolution mismatch");
}

inline bool near(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0 ? a + kTwoPi : a;
}

inline bool same_phase(double a, double b) {
  double d = wrap_angle(a - b);
  return d < 1e-9 || kTwoPi - d < 1e-9;
}

}  // namespace detail

// Ratio model for a constant-throughput single bounce with zero start phase:
// r = het/hom = −Δω / (ω_r − Δω) with ω_r = 2π/T, so Δω = r ω_r / (r − 1).
inline double heide_ratio_model(double d_omega, double T) {
  const double wr = kTwoPi / T;
  return -d_omega / (wr - d_omega);
}

inline double heide_invert(double r, double T) { return r * (kTwoPi / T) / (r - 1.0); }

inline VelocityMap estimate_velocity_heide(const Measurement& het, const Measurement& hom) {
  detail::check_same_shape(het.buffer, hom.buffer);
  const auto& hc = het.config;
  const auto& oc = hom.config;
  if (!detail::same_phase(hc.psi, oc.psi)) throw Error("velocity: heterodyne and homodyne ψ differ");
  if (!detail::near(hc.omega_g, oc.omega_g) || !detail::near(hc.T, oc.T))
    throw Error("velocity: heterodyne and homodyne ω_g or T differ");
  if (!detail::near(hc.omega_tilde(), 1.0, 1e-6) || std::abs(oc.omega_tilde()) > 1e-6)
    throw Error("velocity: expected heterodyne at ω̃ = 1 and homodyne at ω̃ = 0");
  VelocityMap vm;
  const int w = het.buffer.width, h = het.buffer.height;
  vm.speed = Image(w, h);
  vm.ratio = Image(w, h);
  vm.valid = normalizer_mask(hom.buffer);
  for (size_t i = 0; i < het.buffer.size(); ++i) {
    if (!vm.valid[i]) continue;
    double r = het.buffer.data[i] / hom.buffer.data[i];
    vm.ratio.data[i] = r;
    vm.speed.data[i] = speed_from_doppler(heide_invert(r, hc.T), hc.omega_g);
  }
  return vm;
}

// Pick, per pixel, the homodyne buffer with the larger magnitude. `choice` receives
// 0 or 1 per pixel when non-null.
inline Image mix_homodyne_phases(const Image& a, const Image& b, std::vector<uint8_t>* choice = nullptr) {
  detail::check_same_shape(a, b);
  Image out(a.width, a.height);
  if (choice) choice->assign(a.size(), 0);
  for (size_t i = 0; i < a.size(); ++i) {
    bool use_b = std::abs(b.data[i]) > std::abs(a.data[i]);
    out.data[i] = use_b ? b.data[i] : a.data[i];
    if (choice) (*choice)[i] = use_b;
  }
  return out;
}

// Heide ratio with two (het, hom) phase pairs; each pixel uses the pair whose
// homodyne magnitude is larger.
inline VelocityMap estimate_velocity_heide_mixed(const Measurement& het_a, const Measurement& hom_a,
                                                 const Measurement& het_b, const Measurement& hom_b) {
  // Validates each pair; the maps themselves are discarded.
  estimate_velocity_heide(het_a, hom_a);
  estimate_velocity_heide(het_b, hom_b);
  std::vector<uint8_t> choice;
  Image mixed = mix_homodyne_phases(hom_a.buffer, hom_b.buffer, &choice);
  VelocityMap vm;
  vm.speed = Image(mixed.width, mixed.height);
  vm.ratio = Image(mixed.width, mixed.height);
  vm.valid = normalizer_mask(mixed);
  const auto& cfg = het_a.config;
  for (size_t i = 0; i < mixed.size(); ++i) {
    if (!vm.valid[i]) continue;
    double r = (choice[i] ? het_b : het_a).buffer.data[i] / mixed.data[i];
    vm.ratio.data[i] = r;
    vm.speed.data[i] = speed_from_doppler(heide_invert(r, cfg.T), cfg.omega_g);
  }
  return vm;
}

// ---------------------------------------------------------------------------
// Four-phase heterodyne + two-phase homodyne ratio.

inline constexpr double kHuOmegaTilde = 0.6625;

// |∫₀ᵀ e^{iωt} dt|
inline double phasor_magnitude(double omega, double T) {
  double x = 0.5 * omega * T;
  if (std::abs(x) < 1e-8) return T;
  return std::abs(2.0 * std::sin(x) / omega);
}

// r₂(Δω) = |∫ e^{i(ω_d − Δω)t}| / |∫ e^{−iΔωt}|; independent of the start phase.
inline double hu_ratio_model(double d_omega, double omega_d, double T) {
  return phasor_magnitude(omega_d - d_omega, T) / phasor_magnitude(d_omega, T);
}

// Monotone branch of r₂ around Δω = 0, found by scanning outward until the slope changes sign.
struct HuInverter {
  double omega_d, T;
  double lo, hi;

  HuInverter(double omega_d_, double T_) : omega_d(omega_d_), T(T_) {
    const double step = 1e-3 * kTwoPi / T;
    auto f = [&](double d) { return hu_ratio_model(d, omega_d, T); };
    lo = 0.0;
    while (lo > -kTwoPi / T && f(lo - step) < f(lo)) lo -= step;
    hi = 0.0;
    while (hi < kTwoPi / T && f(hi + step) > f(hi)) hi += step;
  }

  // Δω for ratio r, or NaN when r is outside the monotone branch.
  double operator()(double r) const {
    auto f = [&](double d) { return hu_ratio_model(d, omega_d, T); };
    double a = lo, b = hi;
    if (!(r >= f(a) && r <= f(b))) return std::nan("");
    for (int i = 0; i < 200 && b - a > 1e-14 * (kTwoPi / T); ++i) {
      double m = 0.5 * (a + b);
      (f(m) < r ? a : b) = m;
    }
    return 0.5 * (a + b);
  }
};

// het: four buffers at ψ0 + k π/2 (k = 0..3), all at the same ω̃;
// hom: two buffers at ψh and ψh + π/2 with ω̃ = 0.
inline VelocityMap estimate_velocity_hu(const std::vector<Measurement>& het, const std::vector<Measurement>& hom) {
  if (het.size() != 4) throw Error("velocity: expected 4 heterodyne buffers, got " + std::to_string(het.size()));
  if (hom.size() != 2) throw Error("velocity: expected 2 homodyne buffers, got " + std::to_string(hom.size()));
  const auto& c0 = het[0].config;
  for (int k = 0; k < 4; ++k) {
    detail::check_same_shape(het[k].buffer, het[0].buffer);
    const auto& c = het[k].config;
    if (!detail::near(c.omega_d, c0.omega_d) || !detail::near(c.omega_g, c0.omega_g) || !detail::near(c.T, c0.T))
      throw Error("velocity: heterodyne buffers must share ω_d, ω_g and T");
    if (!detail::same_phase(c.psi, c0.psi + k * 0.5 * kPi)) throw Error("velocity: heterodyne ψ offsets must step by π/2");
  }
  for (int k = 0; k < 2; ++k) {
    detail::check_same_shape(hom[k].buffer, het[0].buffer);
    const auto& c = hom[k].config;
    if (std::abs(c.omega_tilde()) > 1e-6) throw Error("velocity: homodyne buffers must have ω̃ = 0");
    if (!detail::near(c.omega_g, c0.omega_g) || !detail::near(c.T, c0.T))
      throw Error("velocity: homodyne buffers must share ω_g and T");
  }
  if (!detail::same_phase(hom[1].config.psi, hom[0].config.psi + 0.5 * kPi))
    throw Error("velocity: homodyne ψ offsets must differ by π/2");

  HuInverter inv(c0.omega_d, c0.T);
  const int w = het[0].buffer.width, h = het[0].buffer.height;
  VelocityMap vm;
  vm.speed = Image(w, h);
  vm.ratio = Image(w, h);
  Image norm(w, h);
  for (size_t i = 0; i < norm.size(); ++i) norm.data[i] = std::hypot(hom[0].buffer.data[i], hom[1].buffer.data[i]);
  vm.valid = normalizer_mask(norm);
  for (size_t i = 0; i < norm.size(); ++i) {
    if (!vm.valid[i]) continue;
    double re = 0.5 * (het[0].buffer.data[i] - het[2].buffer.data[i]);
    double im = 0.5 * (het[1].buffer.data[i] - het[3].buffer.data[i]);
    double r2 = std::hypot(re, im) / norm.data[i];
    vm.ratio.data[i] = r2;
    double dw = inv(r2);
    if (std::isnan(dw)) {
      vm.valid[i] = 0;
      continue;
    }
    vm.speed.data[i] = speed_from_doppler(dw, c0.omega_g);
  }
  return vm;
}

// ---------------------------------------------------------------------------
// Single-bounce forward models for a collocated source at distance l(t) = l + u t.
// Values are normalized by (g1/2) T / l², i.e. a static homodyne pixel with zero
// phase reads 1.

struct SingleBounce {
  double l = 1.0;  // m
  double u = 0.0;  // m/s, positive receding
  double throughput = 1.0;  // f_r · cos
};

inline void check_single_bounce(const SingleBounce& sb) {
  if (!(sb.l > 0)) throw Error("single-bounce distance must be positive");
}

// Quadrature reference: ∫₀ᵀ l²/(l+ut)² · m(t, τ(t)) dt / ((g1/2) T).
inline double single_bounce_quadrature(const SingleBounce& sb, const ModulationConfig& cfg, int panels = 1 << 14) {
  check_single_bounce(sb);
  if (!(sb.l + sb.u * cfg.T > 0)) throw Error("single-bounce distance must stay positive");
  Modulator mod(cfg);
  auto f = [&](double t) {
    double d = sb.l + sb.u * t;
    double tau = 2.0 * d / kSpeedOfLight;
    return sb.l * sb.l / (d * d) * mod(t, tau);
  };
  return sb.throughput * simpson(f, 0.0, cfg.T, panels) / (0.5 * cfg.g1 * cfg.T);
}

// Order-k Taylor expansion of l²/(l+ut)² integrated in closed form (sinusoids only).
inline double taylor_forward_model(int order, const SingleBounce& sb, const ModulationConfig& cfg) {
  check_single_bounce(sb);
  if (order < 0 || order > 2) throw Error("Taylor order must be 0, 1 or 2");
  if (!(cfg.sensor_waveform.is_sinusoid() && cfg.illum_waveform.is_sinusoid()))
    throw Error("the closed-form Taylor model needs sinusoidal waveforms");
  // l²/(l+ut)² = Σ (k+1)(−u/l)^k t^k
  const double omega = cfg.omega_d + 2.0 * sb.u * cfg.omega_g / kSpeedOfLight;
  const double theta = cfg.omega_g * 2.0 * sb.l / kSpeedOfLight + cfg.psi;
  double sum = 0.0, coeff = 1.0;
  for (int k = 0; k <= order; ++k) {
    sum += (k + 1) * coeff * integrate_tn_cos(k, omega, theta, cfg.T);
    coeff *= -sb.u / sb.l;
  }
  return sb.throughput * sum / cfg.T;
}

// Synthetic noise-free buffer from the quadrature model, one value per pixel.
inline Image single_bounce_buffer(const std::vector<SingleBounce>& pixels, int w, int h, const ModulationConfig& cfg) {
  if (pixels.size() != size_t(w) * h) throw Error("single_bounce_buffer: pixel count mismatch");
  Image img(w, h);
  for (size_t i = 0; i < pixels.size(); ++i) img.data[i] = single_bounce_quadrature(pixels[i], cfg);
  return img;
}

}  // namespace dtof
