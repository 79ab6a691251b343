// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dtof/scene.hpp"

namespace dtof {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Mesh files: Wavefront OBJ (v/f records, polygons fanned) and ASCII PLY.

inline std::shared_ptr<TriangleMesh> load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mesh '" + path.string() + "'");
  auto mesh = std::make_shared<TriangleMesh>();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x >> p.y >> p.z)) throw Error(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh->positions.push_back(p);
    } else if (tag == "f") {
      std::vector<uint32_t> idx;
      std::string tok;
      while (ss >> tok) {
        long v = std::stol(tok.substr(0, tok.find('/')));
        if (v < 0) v += long(mesh->positions.size()) + 1;
        if (v < 1 || size_t(v) > mesh->positions.size())
          throw Error(path.string() + ":" + std::to_string(lineno) + ": face index out of range");
        idx.push_back(uint32_t(v - 1));
      }
      for (size_t k = 2; k < idx.size(); ++k) mesh->triangles.push_back({idx[0], idx[k - 1], idx[k]});
    }
  }
  return mesh;
}

inline std::shared_ptr<TriangleMesh> load_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mesh '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw Error(path.string() + ": not a PLY file");
  size_t n_vert = 0, n_face = 0;
  std::string current;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") throw Error(path.string() + ": only ASCII PLY is supported");
    } else if (tag == "element") {
      size_t n;
      ss >> current >> n;
      if (current == "vertex") n_vert = n;
      if (current == "face") n_face = n;
    } else if (tag == "end_header") {
      break;
    }
  }
  auto mesh = std::make_shared<TriangleMesh>();
  for (size_t i = 0; i < n_vert; ++i) {
    std::getline(in, line);
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x >> p.y >> p.z)) throw Error(path.string() + ": bad vertex record");
    mesh->positions.push_back(p);
  }
  for (size_t i = 0; i < n_face; ++i) {
    std::getline(in, line);
    std::istringstream ss(line);
    size_t k;
    ss >> k;
    std::vector<uint32_t> idx(k);
    for (auto& v : idx) {
      ss >> v;
      if (v >= n_vert) throw Error(path.string() + ": face index out of range");
    }
    for (size_t j = 2; j < k; ++j) mesh->triangles.push_back({idx[0], idx[j - 1], idx[j]});
  }
  return mesh;
}

inline std::shared_ptr<TriangleMesh> load_mesh(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::shared_ptr<TriangleMesh> m;
  if (ext == ".obj" || ext == ".OBJ")
    m = load_obj(path);
  else if (ext == ".ply" || ext == ".PLY")
    m = load_ply(path);
  else
    throw Error("unsupported mesh format '" + path.string() + "'");
  if (m->triangles.empty()) throw Error("mesh '" + path.string() + "' has no faces");
  return m;
}

// ---------------------------------------------------------------------------
// JSON scene schema (see README).

namespace detail {

inline Vec3 vec3_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(std::string(what) + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Transform transform_of(const json& j) {
  Transform t;
  if (j.contains("translate")) t.translation = vec3_of(j["translate"], "translate");
  if (j.contains("scale")) {
    if (j["scale"].is_number())
      t.scale = Vec3(j["scale"].get<double>());
    else
      t.scale = vec3_of(j["scale"], "scale");
  }
  if (j.contains("quat")) {
    const auto& q = j["quat"];
    if (!q.is_array() || q.size() != 4) throw Error("quat: expected [w, x, y, z]");
    t.rotation = Quat{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
    double n2 = t.rotation.w * t.rotation.w + t.rotation.x * t.rotation.x + t.rotation.y * t.rotation.y +
                t.rotation.z * t.rotation.z;
    if (!(n2 > 0)) throw Error("quat: zero quaternion");
    if (std::abs(n2 - 1.0) > 1e-12) t.rotation = t.rotation.normalized();
  } else if (j.contains("rotate")) {
    const auto& r = j["rotate"];
    t.rotation = Quat::from_axis_angle(vec3_of(r.at("axis"), "rotate.axis"), r.at("angle_deg").get<double>() * kPi / 180.0);
  }
  if (t.scale.x <= 0 || t.scale.y <= 0 || t.scale.z <= 0) throw Error("scale must be positive");
  return t;
}

inline json to_json(const Transform& t) {
  return json{{"translate", to_json(t.translation)},
              {"quat", json::array({t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z})},
              {"scale", to_json(t.scale)}};
}

inline MaterialKind material_kind_of(const std::string& s) {
  if (s == "diffuse") return MaterialKind::diffuse;
  if (s == "mirror") return MaterialKind::mirror;
  if (s == "rough_conductor" || s == "conductor") return MaterialKind::rough_conductor;
  if (s == "dielectric") return MaterialKind::dielectric;
  throw Error("unknown material type '" + s + "'");
}

inline std::string to_string(MaterialKind k) {
  switch (k) {
    case MaterialKind::diffuse: return "diffuse";
    case MaterialKind::mirror: return "mirror";
    case MaterialKind::rough_conductor: return "rough_conductor";
    case MaterialKind::dielectric: return "dielectric";
  }
  return "?";
}

}  // namespace detail

inline Scene scene_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  Scene s;
  try {
    s.exposure = j.value("exposure", 1.5e-3);
    const auto& c = j.at("camera");
    s.camera.origin = detail::vec3_of(c.at("origin"), "camera.origin");
    s.camera.target = detail::vec3_of(c.at("target"), "camera.target");
    if (c.contains("up")) s.camera.up = detail::vec3_of(c["up"], "camera.up");
    if (c.contains("vfov_deg")) s.camera.vfov = c["vfov_deg"].get<double>() * kPi / 180.0;
    if (c.contains("vfov")) s.camera.vfov = c["vfov"].get<double>();
    s.camera.width = c.value("width", 64);
    s.camera.height = c.value("height", 64);

    std::map<std::string, int> mat_index;
    for (const auto& m : j.value("materials", json::array())) {
      Material mat;
      mat.name = m.at("name").get<std::string>();
      mat.kind = detail::material_kind_of(m.value("type", "diffuse"));
      mat.albedo = m.value("albedo", mat.albedo);
      mat.roughness = m.value("roughness", mat.roughness);
      mat.ior = m.value("ior", mat.ior);
      if (mat_index.count(mat.name)) throw Error("duplicate material '" + mat.name + "'");
      mat_index[mat.name] = int(s.materials.size());
      s.materials.push_back(mat);
    }

    for (const auto& p : j.at("shapes")) {
      Primitive prim;
      prim.name = p.value("name", "shape" + std::to_string(s.primitives.size()));
      std::string type = p.at("type").get<std::string>();
      if (type == "sphere") {
        prim.shape = Sphere{detail::vec3_of(p.value("center", json::array({0, 0, 0})), "center"), p.value("radius", 1.0)};
      } else if (type == "rectangle") {
        Rectangle r;
        r.corner = detail::vec3_of(p.at("corner"), "corner");
        r.e1 = detail::vec3_of(p.at("e1"), "e1");
        r.e2 = detail::vec3_of(p.at("e2"), "e2");
        prim.shape = r;
      } else if (type == "mesh") {
        std::shared_ptr<TriangleMesh> mesh;
        if (p.contains("file")) {
          std::filesystem::path f = p["file"].get<std::string>();
          mesh = load_mesh(f.is_absolute() ? f : base_dir / f);
          mesh->source = p["file"].get<std::string>();
        } else {
          mesh = std::make_shared<TriangleMesh>();
          for (const auto& v : p.at("positions")) mesh->positions.push_back(detail::vec3_of(v, "positions"));
          for (const auto& t : p.at("triangles")) {
            std::array<uint32_t, 3> tri{t.at(0).get<uint32_t>(), t.at(1).get<uint32_t>(), t.at(2).get<uint32_t>()};
            for (auto k : tri)
              if (k >= mesh->positions.size()) throw Error("mesh '" + prim.name + "': index out of range");
            mesh->triangles.push_back(tri);
          }
        }
        mesh->closed = p.value("closed", true);
        mesh->build();
        prim.shape = std::shared_ptr<const TriangleMesh>(mesh);
      } else {
        throw Error("unknown shape type '" + type + "'");
      }
      std::string mname = p.value("material", "");
      if (mname.empty()) {
        if (s.materials.empty()) s.materials.push_back(Material{"default"});
        prim.material = 0;
      } else {
        auto it = mat_index.find(mname);
        if (it == mat_index.end()) throw Error("shape '" + prim.name + "' references unknown material '" + mname + "'");
        prim.material = it->second;
      }
      if (p.contains("transform_at_0")) prim.motion.at0 = detail::transform_of(p["transform_at_0"]);
      prim.motion.atT = p.contains("transform_at_T") ? detail::transform_of(p["transform_at_T"]) : prim.motion.at0;
      if (p.contains("emitter")) {
        if (type != "rectangle") throw Error("area emitters must be rectangles");
        Emitter e;
        e.kind = EmitterKind::area;
        e.radiance = p["emitter"].value("radiance", 1.0);
        e.primitive = int(s.primitives.size());
        s.emitters.push_back(e);
      }
      s.primitives.push_back(std::move(prim));
    }

    for (const auto& l : j.value("lights", json::array())) {
      std::string type = l.value("type", "point");
      if (type != "point") throw Error("unknown light type '" + type + "' (area lights attach to rectangles)");
      Emitter e;
      e.kind = EmitterKind::point;
      e.intensity = l.value("intensity", 1.0);
      e.collocated = l.value("collocated", true);
      if (l.contains("position")) e.position = detail::vec3_of(l["position"], "light.position");
      s.emitters.push_back(e);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("scene: ") + e.what());
  }
  s.finalize();
  return s;
}

inline json scene_to_json(const Scene& s) {
  json j;
  j["exposure"] = s.exposure;
  j["camera"] = {{"origin", detail::to_json(s.camera.origin)},
                 {"target", detail::to_json(s.camera.target)},
                 {"up", detail::to_json(s.camera.up)},
                 {"vfov", s.camera.vfov},
                 {"width", s.camera.width},
                 {"height", s.camera.height}};
  j["materials"] = json::array();
  for (const auto& m : s.materials)
    j["materials"].push_back({{"name", m.name},
                              {"type", detail::to_string(m.kind)},
                              {"albedo", m.albedo},
                              {"roughness", m.roughness},
                              {"ior", m.ior}});
  j["shapes"] = json::array();
  for (const auto& p : s.primitives) {
    json o;
    o["name"] = p.name;
    o["material"] = s.materials[p.material].name;
    std::visit(
        [&](const auto& sh) {
          using S = std::decay_t<decltype(sh)>;
          if constexpr (std::is_same_v<S, Sphere>) {
            o["type"] = "sphere";
            o["center"] = detail::to_json(sh.center);
            o["radius"] = sh.radius;
          } else if constexpr (std::is_same_v<S, Rectangle>) {
            o["type"] = "rectangle";
            o["corner"] = detail::to_json(sh.corner);
            o["e1"] = detail::to_json(sh.e1);
            o["e2"] = detail::to_json(sh.e2);
          } else {
            o["type"] = "mesh";
            o["closed"] = sh->closed;
            o["positions"] = json::array();
            for (const auto& v : sh->positions) o["positions"].push_back(detail::to_json(v));
            o["triangles"] = sh->triangles;
          }
        },
        p.shape);
    o["transform_at_0"] = detail::to_json(p.motion.at0);
    o["transform_at_T"] = detail::to_json(p.motion.atT);
    if (p.emitter >= 0) o["emitter"] = {{"radiance", s.emitters[p.emitter].radiance}};
    j["shapes"].push_back(o);
  }
  j["lights"] = json::array();
  for (const auto& e : s.emitters) {
    if (e.kind != EmitterKind::point) continue;
    json l{{"type", "point"}, {"intensity", e.intensity}, {"collocated", e.collocated}};
    if (!e.collocated) l["position"] = detail::to_json(e.position);
    j["lights"].push_back(l);
  }
  return j;
}

// FNV-1a over the canonical serialization.
inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t scene_hash(const Scene& s) { return fnv1a(scene_to_json(s).dump()); }

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error("scene '" + path.string() + "': " + e.what());
  }
  return scene_from_json(j, path.parent_path());
}

inline void save_scene(const std::filesystem::path& path, const Scene& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write scene '" + path.string() + "'");
  out << scene_to_json(s).dump(2) << "\n";
}

}  // namespace dtof
