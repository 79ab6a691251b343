// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "dtof/core.hpp"
#include "dtof/sampling.hpp"
#include "dtof/scene.hpp"

namespace dtof {

// Directions are world-space unit vectors pointing away from the surface:
// wo toward the previous vertex, wi toward the next one.
struct BsdfSample {
  Vec3 wi;
  double weight = 0.0;  // f |cos| / pdf
  double f = 0.0;
  double pdf = 0.0;     // solid angle; 0 for delta lobes
  bool delta = false;
  bool refracted = false;
};

namespace detail {

inline Vec3 reflect(const Vec3& w, const Vec3& n) { return n * (2.0 * dot(w, n)) - w; }

inline double fresnel_dielectric(double cos_i, double eta) {
  cos_i = std::clamp(cos_i, -1.0, 1.0);
  if (cos_i < 0) {
    eta = 1.0 / eta;
    cos_i = -cos_i;
  }
  double sin2_t = (1.0 - cos_i * cos_i) / (eta * eta);
  if (sin2_t >= 1.0) return 1.0;
  double cos_t = safe_sqrt(1.0 - sin2_t);
  double rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
  double rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
  return 0.5 * (rs * rs + rp * rp);
}

inline double ggx_d(double cos_h, double alpha) {
  if (cos_h <= 0) return 0.0;
  double a2 = alpha * alpha;
  double c2 = cos_h * cos_h;
  double d = c2 * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

inline double ggx_g1(double cos_v, double alpha) {
  if (cos_v <= 0) return 0.0;
  double c2 = cos_v * cos_v;
  double t2 = (1.0 - c2) / c2;
  return 2.0 / (1.0 + std::sqrt(1.0 + alpha * alpha * t2));
}

}  // namespace detail

// Normal flipped toward wo, for two-sided opaque surfaces.
inline Vec3 facing_normal(const Vec3& n, const Vec3& wo) { return dot(n, wo) >= 0 ? n : -n; }

inline double bsdf_eval(const Material& m, const Vec3& n_geo, const Vec3& wo, const Vec3& wi) {
  if (m.is_delta()) return 0.0;
  Vec3 n = facing_normal(n_geo, wo);
  double co = dot(n, wo), ci = dot(n, wi);
  if (co <= 0 || ci <= 0) return 0.0;
  if (m.kind == MaterialKind::diffuse) return m.albedo * kInvPi;
  Vec3 h = normalize(wo + wi);
  double d = detail::ggx_d(dot(n, h), m.roughness);
  double g = detail::ggx_g1(co, m.roughness) * detail::ggx_g1(ci, m.roughness);
  return m.albedo * d * g / (4.0 * co * ci);
}

inline double bsdf_pdf(const Material& m, const Vec3& n_geo, const Vec3& wo, const Vec3& wi) {
  if (m.is_delta()) return 0.0;
  Vec3 n = facing_normal(n_geo, wo);
  double co = dot(n, wo), ci = dot(n, wi);
  if (co <= 0 || ci <= 0) return 0.0;
  if (m.kind == MaterialKind::diffuse) return ci * kInvPi;
  Vec3 h = normalize(wo + wi);
  double ch = dot(n, h);
  return detail::ggx_d(ch, m.roughness) * ch / (4.0 * std::abs(dot(wo, h)));
}

inline BsdfSample bsdf_sample(const Material& m, const Vec3& n_geo, const Vec3& wo, double u1, double u2,
                              double u_lobe) {
  BsdfSample s;
  switch (m.kind) {
    case MaterialKind::diffuse: {
      Vec3 n = facing_normal(n_geo, wo);
      Frame fr(n);
      Vec3 l = sample_cosine_hemisphere(u1, u2);
      if (l.z <= 0) return s;
      s.wi = fr.to_world(l);
      s.pdf = l.z * kInvPi;
      s.f = m.albedo * kInvPi;
      s.weight = m.albedo;
      return s;
    }
    case MaterialKind::mirror: {
      Vec3 n = facing_normal(n_geo, wo);
      s.wi = detail::reflect(wo, n);
      s.delta = true;
      s.weight = m.albedo;
      return s;
    }
    case MaterialKind::rough_conductor: {
      Vec3 n = facing_normal(n_geo, wo);
      Frame fr(n);
      double a2 = m.roughness * m.roughness;
      double cos2 = (1.0 - u1) / (1.0 + (a2 - 1.0) * u1);
      double ct = safe_sqrt(cos2), st = safe_sqrt(1.0 - cos2);
      double phi = kTwoPi * u2;
      Vec3 h = fr.to_world({st * std::cos(phi), st * std::sin(phi), ct});
      s.wi = detail::reflect(wo, h);
      s.f = bsdf_eval(m, n_geo, wo, s.wi);
      s.pdf = bsdf_pdf(m, n_geo, wo, s.wi);
      if (s.f <= 0 || s.pdf <= 0) return BsdfSample{};
      s.weight = s.f * dot(n, s.wi) / s.pdf;
      return s;
    }
    case MaterialKind::dielectric: {
      double cos_o = dot(n_geo, wo);
      double eta = m.ior;  // n_geo points outside
      double fr = detail::fresnel_dielectric(cos_o, eta);
      s.delta = true;
      if (u_lobe < fr) {
        s.wi = detail::reflect(wo, cos_o >= 0 ? n_geo : -n_geo);
        s.weight = 1.0;
        return s;
      }
      double e = cos_o >= 0 ? eta : 1.0 / eta;  // n_t / n_i
      Vec3 n = cos_o >= 0 ? n_geo : -n_geo;
      double ci = std::abs(cos_o);
      double sin2_t = (1.0 - ci * ci) / (e * e);
      double ct = safe_sqrt(1.0 - sin2_t);
      s.wi = -wo / e + n * (ci / e - ct);
      s.wi = normalize(s.wi);
      s.refracted = true;
      s.weight = 1.0 / (e * e);
      return s;
    }
  }
  return s;
}

}  // namespace dtof
