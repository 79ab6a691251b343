// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dtof/core.hpp"
#include "dtof/image.hpp"
#include "dtof/transform.hpp"

namespace dtof {

struct AABB {
  Vec3 lo{kInf, kInf, kInf};
  Vec3 hi{-kInf, -kInf, -kInf};

  void expand(const Vec3& p) { lo = vmin(lo, p); hi = vmax(hi, p); }
  void expand(const AABB& b) { lo = vmin(lo, b.lo); hi = vmax(hi, b.hi); }
  bool valid() const { return lo.x <= hi.x; }
  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 extent() const { return hi - lo; }

  bool hit(const Vec3& o, const Vec3& inv_d, double tmin, double tmax) const {
    for (int a = 0; a < 3; ++a) {
      double t0 = (lo[a] - o[a]) * inv_d[a];
      double t1 = (hi[a] - o[a]) * inv_d[a];
      if (t0 > t1) std::swap(t0, t1);
      tmin = t0 > tmin ? t0 : tmin;
      tmax = t1 < tmax ? t1 : tmax;
      if (tmin > tmax) return false;
    }
    return true;
  }

  AABB transformed(const Affine& xf) const {
    AABB b;
    for (int i = 0; i < 8; ++i)
      b.expand(xf.point({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z}));
    return b;
  }
};

// Object-space hit record.
struct LocalHit {
  double t = kInf;
  Vec3 p;
  Vec3 n;  // unit geometric normal, object space
  double u = 0, v = 0;
  int tri = -1;
};

struct Sphere {
  Vec3 center{};
  double radius = 1.0;

  AABB bounds() const { return {center - Vec3(radius), center + Vec3(radius)}; }

  bool intersect(const Vec3& o, const Vec3& d, double tmin, double tmax, LocalHit& h) const {
    Vec3 oc = o - center;
    double a = dot(d, d);
    double b = dot(oc, d);
    double c = dot(oc, oc) - radius * radius;
    // Numerically stable discriminant (Hearn and Baker).
    Vec3 l = oc - d * (b / a);
    double disc = radius * radius - dot(l, l);
    if (disc < 0) return false;
    double q = -(b + std::copysign(std::sqrt(a * disc), b));
    double t0 = c / q, t1 = q / a;
    if (t0 > t1) std::swap(t0, t1);
    double t = t0 > tmin ? t0 : t1;
    if (t <= tmin || t >= tmax) return false;
    h.t = t;
    h.p = o + d * t;
    h.n = (h.p - center) / radius;
    h.n = normalize(h.n);
    h.p = center + h.n * radius;
    h.u = std::atan2(h.n.y, h.n.x);
    h.v = std::acos(std::clamp(h.n.z, -1.0, 1.0));
    h.tri = -1;
    return true;
  }
};

// Parallelogram corner + a·e1 + b·e2, a, b in [0, 1]; normal = e1 × e2.
struct Rectangle {
  Vec3 corner{-1, -1, 0};
  Vec3 e1{2, 0, 0};
  Vec3 e2{0, 2, 0};

  Vec3 normal() const { return normalize(cross(e1, e2)); }
  double area() const { return length(cross(e1, e2)); }
  AABB bounds() const {
    AABB b;
    b.expand(corner);
    b.expand(corner + e1);
    b.expand(corner + e2);
    b.expand(corner + e1 + e2);
    return b;
  }

  bool intersect(const Vec3& o, const Vec3& d, double tmin, double tmax, LocalHit& h) const {
    Vec3 n = cross(e1, e2);
    double denom = dot(n, d);
    if (denom == 0.0) return false;
    double t = dot(n, corner - o) / denom;
    if (!(t > tmin && t < tmax)) return false;
    Vec3 p = o + d * t;
    Vec3 r = p - corner;
    // Solve r = a e1 + b e2 via the dual basis.
    double nn = dot(n, n);
    double a = dot(cross(r, e2), n) / nn;
    double b = dot(cross(e1, r), n) / nn;
    if (a < 0 || a > 1 || b < 0 || b > 1) return false;
    h.t = t;
    h.p = corner + e1 * a + e2 * b;
    h.n = n / std::sqrt(nn);
    h.u = a;
    h.v = b;
    h.tri = -1;
    return true;
  }

  Vec3 point_at(double a, double b) const { return corner + e1 * a + e2 * b; }
};

class TriangleMesh {
 public:
  std::vector<Vec3> positions;
  std::vector<std::array<uint32_t, 3>> triangles;
  bool closed = true;
  std::string source;  // file the mesh was loaded from, if any

  void build() {
    normals_.resize(triangles.size());
    for (size_t i = 0; i < triangles.size(); ++i) {
      const auto& tr = triangles[i];
      for (uint32_t idx : tr)
        if (idx >= positions.size()) throw Error("mesh index out of range");
      Vec3 n = cross(positions[tr[1]] - positions[tr[0]], positions[tr[2]] - positions[tr[0]]);
      double len = length(n);
      normals_[i] = len > 0 ? n / len : Vec3(0, 0, 1);
    }
    order_.resize(triangles.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = uint32_t(i);
    nodes_.clear();
    if (!triangles.empty()) build_node(0, uint32_t(triangles.size()));
  }

  AABB bounds() const { return nodes_.empty() ? AABB{} : nodes_[0].box; }
  const Vec3& normal(int tri) const { return normals_[tri]; }

  bool intersect_triangle(int i, const Vec3& o, const Vec3& d, double tmin, double tmax, LocalHit& h) const {
    const auto& tr = triangles[i];
    const Vec3& p0 = positions[tr[0]];
    Vec3 e1 = positions[tr[1]] - p0, e2 = positions[tr[2]] - p0;
    Vec3 pv = cross(d, e2);
    double det = dot(e1, pv);
    if (det == 0.0) return false;
    double inv = 1.0 / det;
    Vec3 tv = o - p0;
    double u = dot(tv, pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    Vec3 qv = cross(tv, e1);
    double v = dot(d, qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    double t = dot(e2, qv) * inv;
    if (!(t > tmin && t < tmax)) return false;
    h.t = t;
    h.u = u;
    h.v = v;
    h.tri = i;
    h.p = p0 + e1 * u + e2 * v;
    h.n = normals_[i];
    return true;
  }

  bool intersect(const Vec3& o, const Vec3& d, double tmin, double tmax, LocalHit& h) const {
    if (nodes_.empty()) return false;
    Vec3 inv_d{1.0 / d.x, 1.0 / d.y, 1.0 / d.z};
    uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    bool found = false;
    while (sp) {
      const Node& nd = nodes_[stack[--sp]];
      if (!nd.box.hit(o, inv_d, tmin, tmax)) continue;
      if (nd.count) {
        for (uint32_t k = 0; k < nd.count; ++k)
          if (intersect_triangle(int(order_[nd.first + k]), o, d, tmin, tmax, h)) {
            tmax = h.t;
            found = true;
          }
      } else {
        stack[sp++] = nd.first;
        stack[sp++] = nd.right;
      }
    }
    return found;
  }

  double surface_area() const {
    double a = 0;
    for (const auto& tr : triangles)
      a += 0.5 * length(cross(positions[tr[1]] - positions[tr[0]], positions[tr[2]] - positions[tr[0]]));
    return a;
  }

 private:
  struct Node {
    AABB box;
    uint32_t first = 0;  // left child (inner) or first triangle (leaf)
    uint32_t right = 0;
    uint32_t count = 0;  // 0 for inner nodes
  };

  Vec3 centroid(uint32_t i) const {
    const auto& tr = triangles[i];
    return (positions[tr[0]] + positions[tr[1]] + positions[tr[2]]) / 3.0;
  }

  uint32_t build_node(uint32_t begin, uint32_t end) {
    uint32_t idx = uint32_t(nodes_.size());
    nodes_.emplace_back();
    AABB box, cbox;
    for (uint32_t i = begin; i < end; ++i) {
      for (uint32_t v : triangles[order_[i]]) box.expand(positions[v]);
      cbox.expand(centroid(order_[i]));
    }
    // Pad flat boxes so slab tests stay robust.
    Vec3 pad = box.extent() * 1e-9 + Vec3(1e-12);
    box.lo -= pad;
    box.hi += pad;
    nodes_[idx].box = box;
    uint32_t n = end - begin;
    if (n <= 4) {
      nodes_[idx].first = begin;
      nodes_[idx].count = n;
      return idx;
    }
    Vec3 ext = cbox.extent();
    int axis = ext.x > ext.y ? (ext.x > ext.z ? 0 : 2) : (ext.y > ext.z ? 1 : 2);
    uint32_t mid = begin + n / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](uint32_t a, uint32_t b) { return centroid(a)[axis] < centroid(b)[axis]; });
    uint32_t left = build_node(begin, mid);
    uint32_t right = build_node(mid, end);
    nodes_[idx].first = left;
    nodes_[idx].right = right;
    nodes_[idx].count = 0;
    return idx;
  }

  std::vector<Node> nodes_;
  std::vector<uint32_t> order_;
  std::vector<Vec3> normals_;
};

using Shape = std::variant<Sphere, Rectangle, std::shared_ptr<const TriangleMesh>>;

enum class MaterialKind { diffuse, mirror, rough_conductor, dielectric };

inline constexpr double kDiffuseRoughness = 0.1;

struct Material {
  std::string name;
  MaterialKind kind = MaterialKind::diffuse;
  double albedo = 0.8;     // diffuse albedo or specular reflectance
  double roughness = 0.3;  // GGX alpha, rough conductor only
  double ior = 1.5;        // dielectric only

  bool is_delta() const { return kind == MaterialKind::mirror || kind == MaterialKind::dielectric; }
  // Material class used by the adaptive mapping rule.
  bool is_diffuse_for_mapping() const {
    return kind == MaterialKind::diffuse || (kind == MaterialKind::rough_conductor && roughness > kDiffuseRoughness);
  }
  void validate() const {
    if (!(albedo >= 0.0 && albedo <= 1.0)) throw Error("material '" + name + "': albedo must lie in [0, 1]");
    if (kind == MaterialKind::rough_conductor && !(roughness > 0.0))
      throw Error("material '" + name + "': roughness must be positive");
    if (kind == MaterialKind::dielectric && !(ior > 0.0)) throw Error("material '" + name + "': ior must be positive");
  }
};

enum class EmitterKind { point, area };

struct Emitter {
  EmitterKind kind = EmitterKind::point;
  double intensity = 1.0;  // point: W/sr
  Vec3 position{};
  bool collocated = true;
  double radiance = 1.0;   // area: W/(sr m²)
  int primitive = -1;      // area: attached rectangle
};

struct Primitive {
  std::string name;
  Shape shape;
  AnimatedTransform motion;
  int material = 0;
  int emitter = -1;

  AABB object_bounds() const {
    return std::visit(
        [](const auto& s) -> AABB {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::shared_ptr<const TriangleMesh>>)
            return s->bounds();
          else
            return s.bounds();
        },
        shape);
  }
};

struct Camera {
  Vec3 origin{0, 0, 0};
  Vec3 target{0, 0, 1};
  Vec3 up{0, 1, 0};
  double vfov = 0.6;  // radians
  int width = 64;
  int height = 64;

  // Camera-to-world basis; forward is +z in camera space.
  Frame basis() const {
    Vec3 f = normalize(target - origin);
    Vec3 r = normalize(cross(f, up));
    Vec3 u = cross(r, f);
    Frame fr;
    fr.s = r;
    fr.t = u;
    fr.n = f;
    return fr;
  }

  // Ray through pixel (px, py) at offset (jx, jy) in [0,1)^2; py = 0 is the top row.
  Ray generate(int px, int py, double jx, double jy) const {
    Frame b = basis();
    double tan_half = std::tan(0.5 * vfov);
    double aspect = double(width) / height;
    double sx = (2.0 * (px + jx) / width - 1.0) * tan_half * aspect;
    double sy = (1.0 - 2.0 * (py + jy) / height) * tan_half;
    Ray r;
    r.o = origin;
    r.d = normalize(b.n + b.s * sx + b.t * sy);
    return r;
  }
};

// Reference coordinates of a surface point on its (undeformed) primitive.
struct AttachedPoint {
  uint64_t scene_uid = 0;
  int prim = -1;
  Vec3 p_obj{};
  Vec3 n_obj{};
};

struct Intersection {
  Vec3 p;
  Vec3 n;  // unit geometric normal, world space
  int prim = -1;
  int tri = -1;
  double u = 0, v = 0;
  double distance = kInf;
  double area_ratio = 1.0;  // dA_world / dA_object
  AttachedPoint handle;
};

inline uint64_t next_scene_uid() {
  static std::atomic<uint64_t> counter{1};
  return counter++;
}

struct Scene {
  Camera camera;
  std::vector<Material> materials;
  std::vector<Primitive> primitives;
  std::vector<Emitter> emitters;
  double exposure = 1.5e-3;  // keyframes sit at t = 0 and t = exposure

  uint64_t uid = 0;
  double extent = 1.0;  // bounding-box diagonal over the exposure
  double epsilon = 1e-9;

  // Validates references and freezes derived data; call after any edit.
  void finalize() {
    if (!(exposure > 0)) throw Error("scene exposure must be positive");
    if (camera.width <= 0 || camera.height <= 0) throw Error("camera resolution must be positive");
    if (materials.empty()) materials.push_back(Material{"default"});
    for (const auto& m : materials) m.validate();
    AABB all;
    all.expand(camera.origin);
    for (size_t i = 0; i < primitives.size(); ++i) {
      auto& p = primitives[i];
      if (p.material < 0 || size_t(p.material) >= materials.size())
        throw Error("primitive '" + p.name + "' references a missing material");
      AABB ob = p.object_bounds();
      if (!ob.valid()) throw Error("primitive '" + p.name + "' has empty geometry");
      for (double s : {0.0, 0.25, 0.5, 0.75, 1.0})
        all.expand(ob.transformed(Affine(p.motion.evaluate(s * exposure, exposure))));
      p.emitter = -1;
    }
    for (size_t e = 0; e < emitters.size(); ++e) {
      auto& em = emitters[e];
      if (em.kind == EmitterKind::area) {
        if (em.primitive < 0 || size_t(em.primitive) >= primitives.size() ||
            !std::holds_alternative<Rectangle>(primitives[em.primitive].shape))
          throw Error("area emitter must reference a rectangle primitive");
        primitives[em.primitive].emitter = int(e);
      } else if (em.collocated) {
        em.position = camera.origin;
      }
    }
    extent = std::max(1.0, length(all.extent()));
    epsilon = 1e-9 * extent;
    uid = next_scene_uid();
  }

  Vec3 emitter_position(const Emitter& e) const { return e.collocated ? camera.origin : e.position; }
};

// Scene geometry frozen at one time t.
class SceneInstant {
 public:
  SceneInstant(const Scene& s, double t) : scene_(&s), t_(t) {
    xf_.reserve(s.primitives.size());
    box_.reserve(s.primitives.size());
    for (const auto& p : s.primitives) {
      xf_.emplace_back(p.motion.evaluate(t, s.exposure));
      AABB b = p.object_bounds().transformed(xf_.back());
      b.lo -= Vec3(s.epsilon);
      b.hi += Vec3(s.epsilon);
      box_.push_back(b);
    }
  }

  double time() const { return t_; }
  const Scene& scene() const { return *scene_; }
  const Affine& transform(int prim) const { return xf_[prim]; }

  std::optional<Intersection> intersect(const Ray& ray) const {
    Vec3 inv_d{1.0 / ray.d.x, 1.0 / ray.d.y, 1.0 / ray.d.z};
    double tmax = ray.tmax;
    LocalHit best;
    int best_prim = -1;
    for (size_t i = 0; i < xf_.size(); ++i) {
      if (!box_[i].hit(ray.o, inv_d, ray.tmin, tmax)) continue;
      const Affine& xf = xf_[i];
      Vec3 o = xf.inv_point(ray.o), d = xf.inv_vector(ray.d);
      LocalHit h;
      bool hit = std::visit(
          [&](const auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::shared_ptr<const TriangleMesh>>)
              return s->intersect(o, d, ray.tmin, tmax, h);
            else
              return s.intersect(o, d, ray.tmin, tmax, h);
          },
          scene_->primitives[i].shape);
      if (hit) {
        tmax = h.t;
        best = h;
        best_prim = int(i);
      }
    }
    if (best_prim < 0) return std::nullopt;
    return make_intersection(best_prim, best, ray.o);
  }

  // True when the open segment a→b is blocked.
  bool occluded(const Vec3& a, const Vec3& b) const {
    Vec3 d = b - a;
    double dist = length(d);
    if (dist <= 2 * scene_->epsilon) return false;
    Ray r{a, d / dist, scene_->epsilon, dist - scene_->epsilon};
    return any_hit(r);
  }

  Intersection evolve(const AttachedPoint& h) const {
    check_handle(h);
    const Affine& xf = xf_[h.prim];
    Intersection it;
    it.p = xf.point(h.p_obj);
    it.n = xf.normal_to_world(h.n_obj);
    it.prim = h.prim;
    it.area_ratio = xf.area_ratio(h.n_obj);
    it.handle = h;
    return it;
  }

  void check_handle(const AttachedPoint& h) const {
    if (h.scene_uid != scene_->uid || h.prim < 0 || size_t(h.prim) >= xf_.size())
      throw Error("stale attached-point handle");
  }

 private:
  bool any_hit(const Ray& ray) const {
    Vec3 inv_d{1.0 / ray.d.x, 1.0 / ray.d.y, 1.0 / ray.d.z};
    for (size_t i = 0; i < xf_.size(); ++i) {
      if (!box_[i].hit(ray.o, inv_d, ray.tmin, ray.tmax)) continue;
      const Affine& xf = xf_[i];
      Vec3 o = xf.inv_point(ray.o), d = xf.inv_vector(ray.d);
      LocalHit h;
      bool hit = std::visit(
          [&](const auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::shared_ptr<const TriangleMesh>>)
              return s->intersect(o, d, ray.tmin, ray.tmax, h);
            else
              return s.intersect(o, d, ray.tmin, ray.tmax, h);
          },
          scene_->primitives[i].shape);
      if (hit) return true;
    }
    return false;
  }

  Intersection make_intersection(int prim, const LocalHit& h, const Vec3& origin) const {
    const Affine& xf = xf_[prim];
    Intersection it;
    it.p = xf.point(h.p);
    it.n = xf.normal_to_world(h.n);
    it.prim = prim;
    it.tri = h.tri;
    it.u = h.u;
    it.v = h.v;
    it.distance = length(it.p - origin);
    it.area_ratio = xf.area_ratio(h.n);
    it.handle = {scene_->uid, prim, h.p, h.n};
    return it;
  }

  const Scene* scene_;
  double t_;
  std::vector<Affine> xf_;
  std::vector<AABB> box_;
};

inline std::optional<Intersection> intersect(const Scene& scene, const Ray& ray, double t) {
  return SceneInstant(scene, t).intersect(ray);
}

inline Vec3 evolve_point(const Scene& scene, const AttachedPoint& h, double t) {
  if (h.scene_uid != scene.uid || h.prim < 0 || size_t(h.prim) >= scene.primitives.size())
    throw Error("stale attached-point handle");
  return Affine(scene.primitives[h.prim].motion.evaluate(t, scene.exposure)).point(h.p_obj);
}

struct VelocityGroundTruth {
  Image speed;                 // m/s, positive when receding
  std::vector<uint8_t> valid;  // 1 where the pixel is not an edge or a miss
};

// Per-pixel (depth(T) − depth(0)) / T along the pixel-centre ray.
inline VelocityGroundTruth ground_truth_velocity_map(const Scene& scene) {
  const Camera& cam = scene.camera;
  const int w = cam.width, h = cam.height;
  SceneInstant s0(scene, 0.0), s1(scene, scene.exposure);
  Image d0(w, h, kInf), d1(w, h, kInf);
  std::vector<int> id0(size_t(w) * h, -1), id1(size_t(w) * h, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Ray r = cam.generate(x, y, 0.5, 0.5);
      size_t k = size_t(y) * w + x;
      if (auto hit = s0.intersect(r)) { d0.data[k] = hit->distance; id0[k] = hit->prim; }
      if (auto hit = s1.intersect(r)) { d1.data[k] = hit->distance; id1[k] = hit->prim; }
    }
  VelocityGroundTruth gt{Image(w, h), std::vector<uint8_t>(size_t(w) * h, 0)};
  std::vector<double> jump(size_t(w) * h, 0.0);
  std::vector<double> finite_jumps;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      size_t k = size_t(y) * w + x;
      double m = 0;
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (auto [dx, dy] : nb) {
        int xx = x + dx, yy = y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        double a = d0.data[k], b = d0(xx, yy);
        if (std::isfinite(a) && std::isfinite(b)) m = std::max(m, std::abs(a - b));
        else if (std::isfinite(a) != std::isfinite(b)) m = kInf;
      }
      jump[k] = m;
      if (std::isfinite(m) && std::isfinite(d0.data[k])) finite_jumps.push_back(m);
    }
  double median = 0;
  if (!finite_jumps.empty()) {
    auto mid = finite_jumps.begin() + finite_jumps.size() / 2;
    std::nth_element(finite_jumps.begin(), mid, finite_jumps.end());
    median = *mid;
  }
  for (size_t k = 0; k < jump.size(); ++k) {
    bool ok = id0[k] >= 0 && id0[k] == id1[k] && std::isfinite(d0.data[k]) && std::isfinite(d1.data[k]);
    ok = ok && jump[k] <= 10.0 * median + 1e-9 * d0.data[k];
    gt.valid[k] = ok;
    gt.speed.data[k] = ok ? (d1.data[k] - d0.data[k]) / scene.exposure : 0.0;
  }
  return gt;
}

}  // namespace dtof
