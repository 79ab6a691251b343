// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

#include "dtof/core.hpp"

namespace dtof {

struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    Vec3 a = normalize(axis);
    double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s};
  }

  friend Quat operator*(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
  }
  friend bool operator==(const Quat&, const Quat&) = default;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const {
    double n = norm();
    return {w / n, x / n, y / n, z / n};
  }
};

inline double dot(const Quat& a, const Quat& b) { return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z; }

inline Quat slerp(const Quat& a, Quat b, double s) {
  if (a == b || s <= 0.0) return a;
  if (s >= 1.0) return b;
  double c = dot(a, b);
  if (c < 0) {
    b = {-b.w, -b.x, -b.y, -b.z};
    c = -c;
  }
  double wa, wb;
  if (c > 0.9995) {
    wa = 1.0 - s;
    wb = s;
  } else {
    double th = std::acos(c);
    double sn = std::sin(th);
    wa = std::sin((1.0 - s) * th) / sn;
    wb = std::sin(s * th) / sn;
  }
  return Quat{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z}.normalized();
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

inline Mat3 rotation_matrix(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

// Rigid motion plus per-axis scale: world = R (S p) + m.
struct Transform {
  Vec3 translation{};
  Quat rotation{};
  Vec3 scale{1, 1, 1};

  friend bool operator==(const Transform&, const Transform&) = default;
};

// Precomputed forward/inverse matrices of a Transform.
struct Affine {
  Mat3 fwd{};     // R S
  Mat3 inv{};     // S^-1 R^T
  Mat3 normal{};  // R S^-1, maps object normals to world
  Vec3 t{};
  double det = 1.0;

  Affine() : Affine(Transform{}) {}
  explicit Affine(const Transform& x) {
    Mat3 r = rotation_matrix(x.rotation.normalized());
    const Vec3& s = x.scale;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        fwd[i][j] = r[i][j] * s[j];
        inv[i][j] = r[j][i] / s[i];
        normal[i][j] = r[i][j] / s[j];
      }
    t = x.translation;
    det = s.x * s.y * s.z;
  }

  Vec3 point(const Vec3& p) const { return mul(fwd, p) + t; }
  Vec3 vector(const Vec3& v) const { return mul(fwd, v); }
  Vec3 inv_point(const Vec3& p) const { return mul(inv, p - t); }
  Vec3 inv_vector(const Vec3& v) const { return mul(inv, v); }
  Vec3 normal_to_world(const Vec3& n) const { return normalize(mul(normal, n)); }

  // dA_world / dA_object for a surface element with unit object normal n.
  double area_ratio(const Vec3& n_obj) const {
    Vec3 sn = mul(normal, n_obj);
    return std::abs(det) * length(sn);
  }
};

inline double lerp_exact(double a, double b, double s) {
  if (a == b) return a;
  return (1.0 - s) * a + s * b;
}

inline Vec3 lerp_exact(const Vec3& a, const Vec3& b, double s) {
  return {lerp_exact(a.x, b.x, s), lerp_exact(a.y, b.y, s), lerp_exact(a.z, b.z, s)};
}

// Two-keyframe animation over [0, T]: lerp on translation and scale, slerp on
// rotation. Endpoints are reproduced exactly.
struct AnimatedTransform {
  Transform at0{};
  Transform atT{};

  bool is_static() const { return at0 == atT; }

  Transform evaluate(double t, double T) const {
    if (is_static() || t <= 0.0) return at0;
    if (t >= T) return atT;
    double s = t / T;
    return {lerp_exact(at0.translation, atT.translation, s), slerp(at0.rotation, atT.rotation, s),
            lerp_exact(at0.scale, atT.scale, s)};
  }
};

}  // namespace dtof
