// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dtof/analytic.hpp"
#include "dtof/bsdf.hpp"
#include "dtof/core.hpp"
#include "dtof/image.hpp"
#include "dtof/modulation.hpp"
#include "dtof/parallel.hpp"
#include "dtof/rng.hpp"
#include "dtof/sampling.hpp"
#include "dtof/scene.hpp"

namespace dtof {

inline constexpr int kMaxDepth = 16;

enum class MappingKind { none, replay, reconnect, adaptive };
enum class Precision { f64, f32 };

inline std::string_view to_string(MappingKind m) {
  switch (m) {
    case MappingKind::none: return "none";
    case MappingKind::replay: return "replay";
    case MappingKind::reconnect: return "reconnect";
    case MappingKind::adaptive: return "adaptive";
  }
  return "?";
}

inline MappingKind mapping_from_string(std::string_view s) {
  if (s == "none") return MappingKind::none;
  if (s == "replay" || s == "random-replay") return MappingKind::replay;
  if (s == "reconnect" || s == "reconnection") return MappingKind::reconnect;
  if (s == "adaptive") return MappingKind::adaptive;
  throw Error("unknown mapping '" + std::string(s) + "'");
}

enum class ShiftFailure : uint8_t { none, occluded, miss, zero_throughput, non_bijective };
inline constexpr int kFailureKinds = 5;

inline std::string_view to_string(ShiftFailure f) {
  switch (f) {
    case ShiftFailure::none: return "none";
    case ShiftFailure::occluded: return "occluded";
    case ShiftFailure::miss: return "miss";
    case ShiftFailure::zero_throughput: return "zero_throughput";
    case ShiftFailure::non_bijective: return "non_bijective";
  }
  return "?";
}

struct IntegratorConfig {
  ModulationConfig modulation;
  int spp = 64;
  int n_t = 2;
  TimeStrategy strategy = TimeStrategy::shifted;
  double t_s = -1.0;  // negative: strategy default
  MappingKind mapping = MappingKind::replay;
  int k_d = -1;       // negative: map every vertex
  int max_depth = 4;  // segments, including the final light connection
  Precision precision = Precision::f64;
  uint64_t seed = 1;
  int workers = 0;    // 0: resolve_workers()

  int n_pairs() const { return spp / n_t; }
  int mapped_depth() const {
    if (mapping == MappingKind::none) return 0;
    return k_d < 0 ? max_depth : std::min(k_d, max_depth);
  }
  double shift() const { return t_s < 0 ? default_shift(strategy, modulation.T) : t_s; }

  void validate() const {
    modulation.validate();
    if (spp <= 0) throw Error("spp must be positive");
    if (n_t < 1) throw Error("N_t must be positive");
    if (spp % n_t) throw Error("spp must be divisible by N_t");
    if (max_depth < 1 || max_depth > kMaxDepth) throw Error("max depth must lie in [1, 16]");
    if (k_d > max_depth) throw Error("K_d must not exceed the max depth");
    if (shift() > modulation.T) throw Error("t_s must lie in [0, T]");
    if (n_t == 1 && strategy != TimeStrategy::uniform && strategy != TimeStrategy::stratified)
      throw Error("N_t = 1 supports the uniform and stratified strategies only");
    if (n_t > 2) {
      if (strategy != TimeStrategy::shifted && strategy != TimeStrategy::uniform)
        throw Error("N_t > 2 is defined for shifted (periodic) and uniform sampling only");
      if (strategy == TimeStrategy::shifted && (n_t & (n_t - 1)))
        throw Error("periodic N_t must be a power of two");
      if (mapping == MappingKind::reconnect || mapping == MappingKind::adaptive)
        throw Error("N_t > 2 supports the replay and none mappings only");
    }
  }
};

struct PathVertex {
  Intersection its;
  const Material* mat = nullptr;
  Vec3 wo;                  // toward the previous vertex
  double beta = 0.0;        // f/p of the prefix ending here
  double tau = 0.0;         // time of flight from the camera (s)
  double a_obj = 0.0;       // sampling density in object-area measure; 0 for delta or camera-ray vertices
  double ratio_prod = 1.0;  // Π a_obj(y)/a_obj(x) over reconnected vertices so far
  double pdf_dir = 0.0;     // solid-angle pdf of the arriving direction; 0 when not MIS-able
  double medium = 1.0;      // refractive index of the arriving segment
  bool reconnected = false;
};

struct Completion {
  double value = 0.0;  // f/p including the light MIS weight
  double tau = 0.0;
  bool present = false;
};

// A traced path with every NEE- or emission-completed prefix.
struct PathRecord {
  double time = 0.0;
  int n = 0;  // surface vertices v[1..n]
  std::array<PathVertex, kMaxDepth + 1> v;
  std::array<Completion, kMaxDepth + 1> nee;  // light connection from v[k]
  std::array<Completion, kMaxDepth + 1> hit;  // v[k] lies on an emitter
  int fail_at = kMaxDepth + 1;                // first vertex invalidated by a mapping failure
  ShiftFailure failure = ShiftFailure::none;
  ShiftFailure lost = ShiftFailure::none;     // replay ended early (diagnostic only)

  void reset(double t) {
    time = t;
    n = 0;
    for (auto& c : nee) c = Completion{};
    for (auto& c : hit) c = Completion{};
    fail_at = kMaxDepth + 1;
    failure = lost = ShiftFailure::none;
  }
  double ratio_at(int k) const { return n == 0 ? 1.0 : v[std::min(k, n)].ratio_prod; }
  bool valid_at(int k) const { return k < fail_at; }
};

struct Diagnostics {
  uint64_t pairs = 0;
  uint64_t antithetic_paths = 0;
  std::array<uint64_t, kFailureKinds> failures{};
  std::array<uint64_t, kFailureKinds> replay_lost{};
  std::array<uint64_t, 10> weight_hist{};  // primal MIS weight over [0, 1]
  double sum_pair_variance = 0.0;
  uint64_t pixels = 0;

  void merge(const Diagnostics& o) {
    pairs += o.pairs;
    antithetic_paths += o.antithetic_paths;
    for (int i = 0; i < kFailureKinds; ++i) {
      failures[i] += o.failures[i];
      replay_lost[i] += o.replay_lost[i];
    }
    for (size_t i = 0; i < weight_hist.size(); ++i) weight_hist[i] += o.weight_hist[i];
    sum_pair_variance += o.sum_pair_variance;
    pixels += o.pixels;
  }

  void write_csv(std::ostream& os, const IntegratorConfig& cfg) const {
    os << "key,value\n";
    os << "strategy," << to_string(cfg.strategy) << "\n";
    os << "mapping," << to_string(cfg.mapping) << "\n";
    os << "spp," << cfg.spp << "\n";
    os << "n_t," << cfg.n_t << "\n";
    os << "pairs," << pairs << "\n";
    os << "mean_pixel_variance," << (pixels ? sum_pair_variance / pixels : 0.0) << "\n";
    os << "antithetic_paths," << antithetic_paths << "\n";
    for (int i = 1; i < kFailureKinds; ++i) {
      double rate = antithetic_paths ? double(failures[i]) / antithetic_paths : 0.0;
      os << "failure_rate_" << to_string(ShiftFailure(i)) << "," << rate << "\n";
    }
    for (int i = 1; i < kFailureKinds; ++i) {
      double rate = antithetic_paths ? double(replay_lost[i]) / antithetic_paths : 0.0;
      os << "replay_lost_rate_" << to_string(ShiftFailure(i)) << "," << rate << "\n";
    }
    for (size_t i = 0; i < weight_hist.size(); ++i)
      os << "mis_weight_bin_" << i << "," << weight_hist[i] << "\n";
  }
};

struct FrameBuffers {
  Image dtof;
  Image intensity;
  Image variance;
  Diagnostics diag;
};

// Per-pair record passed to an optional observer.
struct PairRecord {
  int px = 0, py = 0;
  uint32_t pair = 0;
  std::vector<double> times;
  double estimate = 0.0;          // Σ over slots of T · w · f/p · m
  std::vector<double> slot_sums;  // per slot
};

using PairObserver = std::function<void(const PairRecord&)>;

class PathTracer {
 public:
  PathTracer(const Scene& scene, const IntegratorConfig& cfg) : scene_(scene), cfg_(cfg) {
    for (const auto& e : scene.emitters)
      if (e.kind == EmitterKind::area) has_area_ = true;
    last_vertex_ = has_area_ ? cfg.max_depth : cfg.max_depth - 1;
  }

  const IntegratorConfig& config() const { return cfg_; }

  // Primal path: all dimensions from the primal stream.
  void trace_primal(int px, int py, uint32_t pair, double t, PathRecord& out) const {
    trace(px, py, pair, t, out, nullptr, uint32_t(StreamRole::primal), 0);
  }

  // Antithetic path: vertices up to `mapped` follow the mapping from `primal`,
  // the rest use the independent stream `indep_role`.
  void trace_antithetic(int px, int py, uint32_t pair, double t, const PathRecord& primal, uint32_t indep_role,
                        int mapped, PathRecord& out) const {
    trace(px, py, pair, t, out, &primal, indep_role, mapped);
  }

 private:
  uint32_t pixel_index(int px, int py) const { return uint32_t(py) * uint32_t(scene_.camera.width) + uint32_t(px); }

  static bool diffuse(const PathRecord& p, int j) { return j >= 1 && j <= p.n && p.v[j].mat->is_diffuse_for_mapping(); }

  Vec3 offset(const Vec3& p, const Vec3& n, const Vec3& dir) const {
    return p + n * (dot(n, dir) >= 0 ? scene_.epsilon : -scene_.epsilon);
  }

  void fill_vertex(PathVertex& nv, const Intersection& it, const Vec3& from_dir) const {
    nv.its = it;
    nv.mat = &scene_.materials[scene_.primitives[it.prim].material];
    nv.wo = -from_dir;
  }

  void trace(int px, int py, uint32_t pair, double t, PathRecord& out, const PathRecord* primal, uint32_t indep_role,
             int mapped) const {
    out.reset(t);
    const SceneInstant inst(scene_, t);
    const uint32_t pix = pixel_index(px, py);
    const RngStream s_pri(cfg_.seed, pix, pair, StreamRole::primal);
    const RngStream s_ind(cfg_.seed, pix, pair, indep_role);
    const bool anti = primal != nullptr;
    auto stream = [&](int j) -> const RngStream& { return (!anti || j <= mapped) ? s_pri : s_ind; };

    auto [jx, jy] = stream(1).uniform2(dim::at(0, dim::kCameraJitter));
    Ray ray = scene_.camera.generate(px, py, jx, jy);
    auto first = inst.intersect(ray);
    if (!first) {
      if (anti && primal->n >= 1) out.lost = ShiftFailure::miss;
      return;
    }
    {
      PathVertex& v1 = out.v[1];
      fill_vertex(v1, *first, ray.d);
      v1.beta = 1.0;
      v1.tau = first->distance / kSpeedOfLight;
      v1.a_obj = 0.0;
      v1.ratio_prod = 1.0;
      v1.pdf_dir = 0.0;
      v1.medium = 1.0;
      v1.reconnected = false;
      out.n = 1;
    }

    for (int j = 1;; ++j) {
      const PathVertex& x = out.v[j];
      emission(out, j, inst);
      if (j + 1 > cfg_.max_depth) break;
      if (!x.mat->is_delta() && !scene_.emitters.empty()) next_event(out, j, inst, stream(j + 1));
      if (j + 1 > last_vertex_) break;

      const int nj = j + 1;
      bool ok;
      if (!anti || nj > mapped || cfg_.mapping == MappingKind::replay || cfg_.mapping == MappingKind::none) {
        ok = sample_next(out, j, inst, stream(nj));
        if (!ok && anti && primal->n >= nj) out.lost = ShiftFailure::miss;
      } else {
        const bool has_x = primal->n >= nj;
        bool reconnect;
        if (cfg_.mapping == MappingKind::reconnect) {
          if (!has_x) {
            fail(out, nj, ShiftFailure::non_bijective);
            break;
          }
          reconnect = true;
        } else {
          reconnect = has_x && diffuse(*primal, j) && diffuse(out, j) && diffuse(*primal, nj);
        }
        if (reconnect) {
          ShiftFailure f = reconnect_next(out, j, primal->v[nj], inst);
          if (f != ShiftFailure::none) {
            fail(out, nj, f);
            break;
          }
          ok = true;
        } else {
          ok = sample_next(out, j, inst, s_pri);
          // The reverse map would reconnect here, so this pair is not a bijection.
          if (ok && diffuse(out, j) && diffuse(*primal, j) && diffuse(out, nj)) {
            out.n = j;
            fail(out, nj, ShiftFailure::non_bijective);
            break;
          }
          if (!ok && has_x) out.lost = ShiftFailure::miss;
        }
      }
      if (!ok) break;
    }
  }

  static void fail(PathRecord& out, int j, ShiftFailure f) {
    out.fail_at = j;
    out.failure = f;
  }

  bool sample_next(PathRecord& out, int j, const SceneInstant& inst, const RngStream& rng) const {
    const PathVertex& x = out.v[j];
    auto [u1, u2] = rng.uniform2(dim::at(j, dim::kBsdfDir));
    double ul = rng.uniform(dim::at(j, dim::kBsdfLobe));
    BsdfSample bs = bsdf_sample(*x.mat, x.its.n, x.wo, u1, u2, ul);
    if (!(bs.weight > 0.0)) {
      out.lost = ShiftFailure::zero_throughput;
      return false;
    }
    Ray r{offset(x.its.p, x.its.n, bs.wi), bs.wi, 0.0, kInf};
    auto hit = inst.intersect(r);
    if (!hit) return false;
    PathVertex& nv = out.v[j + 1];
    fill_vertex(nv, *hit, bs.wi);
    double dist = length(hit->p - x.its.p);
    double medium = x.medium;
    if (bs.refracted) medium = dot(x.its.n, x.wo) >= 0 ? x.mat->ior : 1.0;
    nv.beta = x.beta * bs.weight;
    nv.tau = x.tau + dist * medium / kSpeedOfLight;
    nv.medium = medium;
    nv.pdf_dir = bs.delta ? 0.0 : bs.pdf;
    nv.a_obj = bs.delta ? 0.0 : bs.pdf * std::abs(dot(hit->n, bs.wi)) / (dist * dist) * hit->area_ratio;
    nv.ratio_prod = x.ratio_prod;
    nv.reconnected = false;
    out.n = j + 1;
    return true;
  }

  ShiftFailure reconnect_next(PathRecord& out, int j, const PathVertex& target, const SceneInstant& inst) const {
    const PathVertex& y = out.v[j];
    Intersection it = inst.evolve(target.its.handle);
    it.tri = target.its.tri;
    it.u = target.its.u;
    it.v = target.its.v;
    Vec3 d = it.p - y.its.p;
    double dist = length(d);
    if (!(dist > 0)) return ShiftFailure::zero_throughput;
    Vec3 wi = d / dist;
    double f = bsdf_eval(*y.mat, y.its.n, y.wo, wi);
    double pdf = bsdf_pdf(*y.mat, y.its.n, y.wo, wi);
    double cos_t = std::abs(dot(it.n, wi));
    if (!(f > 0) || !(pdf > 0) || !(cos_t > 0) || !(target.a_obj > 0)) return ShiftFailure::zero_throughput;
    if (inst.occluded(y.its.p, it.p)) return ShiftFailure::occluded;
    it.distance = dist;
    PathVertex& nv = out.v[j + 1];
    fill_vertex(nv, it, wi);
    nv.beta = y.beta * f * std::abs(dot(y.its.n, wi)) / pdf;
    nv.tau = y.tau + dist * y.medium / kSpeedOfLight;
    nv.medium = y.medium;
    nv.pdf_dir = pdf;
    nv.a_obj = pdf * cos_t / (dist * dist) * it.area_ratio;
    nv.ratio_prod = y.ratio_prod * (nv.a_obj / target.a_obj);
    nv.reconnected = true;
    out.n = j + 1;
    return ShiftFailure::none;
  }

  // Light-sampling density (solid angle at `from`) of hitting emitter point `it`.
  double light_pdf_sa(const Emitter& e, const Intersection& it, const Vec3& from, const SceneInstant& inst) const {
    const auto& rect = std::get<Rectangle>(scene_.primitives[e.primitive].shape);
    double area = rect.area() * inst.transform(e.primitive).area_ratio(rect.normal());
    Vec3 d = it.p - from;
    double d2 = dot(d, d);
    double cos_l = std::abs(dot(it.n, d)) / std::sqrt(d2);
    if (cos_l <= 0) return 0.0;
    return d2 / (cos_l * area) / double(scene_.emitters.size());
  }

  void emission(PathRecord& out, int j, const SceneInstant& inst) const {
    const PathVertex& x = out.v[j];
    int ei = scene_.primitives[x.its.prim].emitter;
    if (ei < 0) return;
    const Emitter& e = scene_.emitters[ei];
    if (dot(x.its.n, x.wo) <= 0) return;  // one-sided emitter
    double w = 1.0;
    if (j > 1 && x.pdf_dir > 0) {
      double pl = light_pdf_sa(e, x.its, out.v[j - 1].its.p, inst);
      w = x.pdf_dir / (x.pdf_dir + pl);
    }
    out.hit[j] = {x.beta * e.radiance * w, x.tau, true};
  }

  void next_event(PathRecord& out, int j, const SceneInstant& inst, const RngStream& rng) const {
    const PathVertex& x = out.v[j];
    const int ne = int(scene_.emitters.size());
    double upick = rng.uniform(dim::at(j, dim::kLightPick));
    int ei = std::min(ne - 1, int(upick * ne));
    const Emitter& e = scene_.emitters[ei];
    Completion c;
    c.present = true;
    if (e.kind == EmitterKind::point) {
      Vec3 lp = scene_.emitter_position(e);
      Vec3 d = lp - x.its.p;
      double dist = length(d);
      c.tau = x.tau + dist * x.medium / kSpeedOfLight;
      if (dist > 0) {
        Vec3 wl = d / dist;
        double f = bsdf_eval(*x.mat, x.its.n, x.wo, wl);
        if (f > 0 && !inst.occluded(offset(x.its.p, x.its.n, wl), lp))
          c.value = x.beta * f * std::abs(dot(x.its.n, wl)) * e.intensity / (dist * dist) * ne;
      }
    } else {
      auto [u1, u2] = rng.uniform2(dim::at(j, dim::kLightPos));
      const auto& rect = std::get<Rectangle>(scene_.primitives[e.primitive].shape);
      const Affine& xf = inst.transform(e.primitive);
      Vec3 lp = xf.point(rect.point_at(u1, u2));
      Vec3 nl = xf.normal_to_world(rect.normal());
      double area = rect.area() * xf.area_ratio(rect.normal());
      Vec3 d = lp - x.its.p;
      double dist = length(d);
      c.tau = x.tau + dist * x.medium / kSpeedOfLight;
      if (dist > 0) {
        Vec3 wl = d / dist;
        double cos_l = -dot(nl, wl);
        double f = bsdf_eval(*x.mat, x.its.n, x.wo, wl);
        if (cos_l > 0 && f > 0 && !inst.occluded(offset(x.its.p, x.its.n, wl), lp)) {
          double pl = dist * dist / (cos_l * area) / ne;
          double pb = bsdf_pdf(*x.mat, x.its.n, x.wo, wl);
          double w = pl / (pl + pb);
          c.value = x.beta * f * std::abs(dot(x.its.n, wl)) * e.radiance / pl * w;
        }
      }
    }
    out.nee[j] = c;
  }

  const Scene& scene_;
  IntegratorConfig cfg_;
  bool has_area_ = false;
  int last_vertex_ = 3;
};

namespace detail {

struct PixelResult {
  double dtof = 0.0, intensity = 0.0, variance = 0.0;
};

inline uint32_t independent_role(int slot) { return uint32_t(StreamRole::independent) + uint32_t(slot); }

}  // namespace detail

// Unbiased estimator of one pixel.
class PixelEstimator {
 public:
  PixelEstimator(const Scene& scene, const IntegratorConfig& cfg)
      : scene_(scene), cfg_(cfg), tracer_(scene, cfg), mod_(cfg.modulation) {
    cfg.validate();
  }

  detail::PixelResult estimate(int px, int py, Diagnostics& diag, const PairObserver* observer = nullptr) {
    const uint32_t pix = uint32_t(py) * uint32_t(scene_.camera.width) + uint32_t(px);
    const uint32_t np = uint32_t(cfg_.n_pairs());
    const double T = cfg_.modulation.T;
    std::vector<uint32_t> perm;
    if (cfg_.strategy == TimeStrategy::decorrelated_stratified && cfg_.n_t == 2)
      perm = stratum_permutation(np, cfg_.seed, pix);

    double mean = 0.0, m2 = 0.0, isum = 0.0;
    float mean_f = 0.0f;
    PairRecord rec;
    for (uint32_t i = 0; i < np; ++i) {
      RngStream ts(cfg_.seed, pix, i, StreamRole::time);
      times_.clear();
      if (cfg_.n_t == 1) {
        double u = ts.uniform(time_dim::kPrimal);
        times_.push_back(cfg_.strategy == TimeStrategy::stratified ? (i + u) * T / np : u * T);
      } else if (cfg_.n_t == 2) {
        TimePair tp = sample_time(cfg_.strategy, i, np, T, cfg_.shift(), ts, perm.empty() ? nullptr : &perm);
        times_.push_back(tp.t_primal);
        times_.push_back(tp.t_antithetic);
      } else if (cfg_.strategy == TimeStrategy::shifted) {
        PeriodicSample s = sample_time_periodic(cfg_.n_t, i, np, T, ts);
        times_ = std::move(s.times);
      } else {
        for (int k = 0; k < cfg_.n_t; ++k) times_.push_back(ts.uniform(0x100u + uint32_t(k)) * T);
      }

      double est = 0.0, inten = 0.0;
      float est_f = 0.0f;
      if (observer) rec.slot_sums.assign(times_.size(), 0.0);
      if (cfg_.n_t == 2) {
        pair_estimate(px, py, i, est, est_f, inten, diag, observer ? &rec : nullptr);
      } else {
        slots_estimate(px, py, i, est, est_f, inten, diag, observer ? &rec : nullptr);
      }
      if (cfg_.precision == Precision::f32) est = est_f;
      diag.pairs++;
      double delta = est - mean;
      mean += delta / (i + 1);
      m2 += delta * (est - mean);
      mean_f += (est_f - mean_f) / float(i + 1);
      isum += inten;
      if (observer) {
        rec.px = px;
        rec.py = py;
        rec.pair = i;
        rec.times = times_;
        rec.estimate = est;
        (*observer)(rec);
      }
    }
    detail::PixelResult r;
    r.dtof = cfg_.precision == Precision::f32 ? double(mean_f) : mean;
    r.intensity = isum / np;
    r.variance = np > 1 ? m2 / (np - 1) / np : 0.0;
    diag.sum_pair_variance += r.variance;
    diag.pixels++;
    return r;
  }

 private:
  double modulation(double t, double tau) const {
    if (cfg_.precision == Precision::f32) {
      return cfg_.modulation.low_pass ? mod_.low_pass_f32(float(t), float(tau))
                                      : mod_.full_product_f32(float(t), float(tau));
    }
    return mod_(t, tau);
  }

  void accumulate(const Completion& c, double w, double t, double& est, float& est_f, double& inten,
                  double* slot_sum) const {
    if (!c.present || c.value == 0.0 || w == 0.0) return;
    const double T = cfg_.modulation.T;
    double m = modulation(t, c.tau);
    double v = T * w * c.value * m;
    est += v;
    est_f += float(T) * float(w) * float(c.value) * float(m);
    inten += T * w * c.value;
    if (slot_sum) *slot_sum += v;
  }

  void pair_estimate(int px, int py, uint32_t i, double& est, float& est_f, double& inten, Diagnostics& diag,
                     PairRecord* rec) {
    const int mapped = cfg_.mapped_depth();
    tracer_.trace_primal(px, py, i, times_[0], x_);
    tracer_.trace_antithetic(px, py, i, times_[1], x_, detail::independent_role(1), mapped, y_);
    diag.antithetic_paths++;
    diag.failures[int(y_.failure)]++;
    diag.replay_lost[int(y_.lost)]++;
    const int kmax = std::max(x_.n, y_.n);
    for (int k = 1; k <= kmax; ++k) {
      double wx = 0.5, wy = 0.5;
      if (mapped > 0) {
        if (!y_.valid_at(k)) {
          wx = 1.0;
          wy = 0.0;
        } else {
          double r = y_.ratio_at(k);
          wx = 1.0 / (1.0 + r);
          wy = r / (1.0 + r);
        }
      }
      if (x_.n >= k) {
        bool any = (x_.nee[k].present && x_.nee[k].value != 0) || (x_.hit[k].present && x_.hit[k].value != 0);
        if (any) diag.weight_hist[std::min<size_t>(9, size_t(wx * 10))]++;
      }
      for (auto comp : {&PathRecord::nee, &PathRecord::hit}) {
        accumulate((x_.*comp)[k], wx, times_[0], est, est_f, inten, rec ? &rec->slot_sums[0] : nullptr);
        accumulate((y_.*comp)[k], wy, times_[1], est, est_f, inten, rec ? &rec->slot_sums[1] : nullptr);
      }
    }
  }

  void slots_estimate(int px, int py, uint32_t i, double& est, float& est_f, double& inten, Diagnostics& diag,
                      PairRecord* rec) {
    const int n = int(times_.size());
    const double w = 1.0 / n;
    const int mapped = cfg_.mapped_depth();
    for (int s = 0; s < n; ++s) {
      if (s == 0) {
        tracer_.trace_primal(px, py, i, times_[0], y_);
        x_ = y_;
      } else {
        tracer_.trace_antithetic(px, py, i, times_[s], x_, detail::independent_role(s), mapped, y_);
        diag.antithetic_paths++;
        diag.replay_lost[int(y_.lost)]++;
      }
      for (int k = 1; k <= y_.n; ++k)
        for (auto comp : {&PathRecord::nee, &PathRecord::hit})
          accumulate((y_.*comp)[k], w, times_[s], est, est_f, inten, rec ? &rec->slot_sums[s] : nullptr);
    }
  }

  const Scene& scene_;
  IntegratorConfig cfg_;
  PathTracer tracer_;
  Modulator mod_;
  PathRecord x_, y_;
  std::vector<double> times_;
};

inline detail::PixelResult estimate_pixel(const Scene& scene, int px, int py, const IntegratorConfig& cfg,
                                          Diagnostics* diag = nullptr, const PairObserver* observer = nullptr) {
  PixelEstimator est(scene, cfg);
  Diagnostics local;
  auto r = est.estimate(px, py, diag ? *diag : local, observer);
  return r;
}

inline constexpr int kTileSize = 8;

template <class PixelFn>
FrameBuffers render_tiles(const Scene& scene, int workers, PixelFn&& make_estimator) {
  const int w = scene.camera.width, h = scene.camera.height;
  FrameBuffers fb{Image(w, h), Image(w, h), Image(w, h), {}};
  const int tx = (w + kTileSize - 1) / kTileSize, ty = (h + kTileSize - 1) / kTileSize;
  const int tiles = tx * ty;
  std::vector<Diagnostics> tile_diag(tiles);
  parallel_for(tiles, resolve_workers(workers), [&](int tile, int) {
    auto est = make_estimator();
    int x0 = (tile % tx) * kTileSize, y0 = (tile / tx) * kTileSize;
    for (int y = y0; y < std::min(h, y0 + kTileSize); ++y)
      for (int x = x0; x < std::min(w, x0 + kTileSize); ++x) {
        detail::PixelResult r = est.estimate(x, y, tile_diag[tile]);
        fb.dtof(x, y) = r.dtof;
        fb.intensity(x, y) = r.intensity;
        fb.variance(x, y) = r.variance;
      }
  });
  for (const auto& d : tile_diag) fb.diag.merge(d);
  return fb;
}

inline FrameBuffers render(const Scene& scene, const IntegratorConfig& cfg) {
  cfg.validate();
  if (std::abs(cfg.modulation.T - scene.exposure) > 1e-12 * scene.exposure)
    throw Error("modulation exposure T differs from the scene exposure");
  return render_tiles(scene, cfg.workers, [&] { return PixelEstimator(scene, cfg); });
}

// ---------------------------------------------------------------------------
// First-order analytic approximation.

struct AnalyticConfig {
  IntegratorConfig base;
  bool zeroth_order = false;  // constant f̂ over the exposure
};

class AnalyticPixelEstimator {
 public:
  AnalyticPixelEstimator(const Scene& scene, const AnalyticConfig& cfg)
      : scene_(scene), cfg_(cfg), tracer_(scene, cfg.base), mod_(cfg.base.modulation) {
    if (cfg.base.mapping == MappingKind::none) throw Error("the analytic approximation needs a shift mapping");
  }

  detail::PixelResult estimate(int px, int py, Diagnostics& diag) {
    const auto& mc = cfg_.base.modulation;
    const double T = mc.T;
    const int n = cfg_.base.spp;
    double mean = 0.0, m2 = 0.0, isum = 0.0;
    for (int i = 0; i < n; ++i) {
      tracer_.trace_primal(px, py, uint32_t(i), 0.0, x_);
      tracer_.trace_antithetic(px, py, uint32_t(i), T, x_, detail::independent_role(1), cfg_.base.max_depth, y_);
      diag.antithetic_paths++;
      diag.failures[int(y_.failure)]++;
      double est = 0.0, inten = 0.0;
      for (int k = 1; k <= x_.n; ++k)
        for (auto comp : {&PathRecord::nee, &PathRecord::hit}) {
          const Completion& c0 = (x_.*comp)[k];
          if (!c0.present) continue;
          const Completion& c1 = (y_.*comp)[k];
          bool ok = y_.valid_at(k) && y_.n >= k && c1.present;
          double v0 = c0.value;
          double v1 = ok ? c1.value * y_.ratio_at(k) : 0.0;
          double tau1 = ok ? c1.tau : c0.tau;
          double a = v0, b = cfg_.zeroth_order ? 0.0 : (v1 - v0) / T;
          double tau_rate = (tau1 - c0.tau) / T;
          est += integrate(a, b, c0.tau, tau_rate);
          inten += a * T + 0.5 * b * T * T;
        }
      diag.pairs++;
      double delta = est - mean;
      mean += delta / (i + 1);
      m2 += delta * (est - mean);
      isum += inten;
    }
    detail::PixelResult r{mean, isum / n, n > 1 ? m2 / (n - 1) / n : 0.0};
    diag.sum_pair_variance += r.variance;
    diag.pixels++;
    return r;
  }

 private:
  // ∫₀ᵀ (a + b t) · m(t, τ₀ + τ′ t) dt
  double integrate(double a, double b, double tau0, double tau_rate) const {
    const auto& mc = cfg_.base.modulation;
    if (mod_.sinusoidal()) {
      double omega = mc.omega_d + mc.omega_g * tau_rate;
      double theta = mc.omega_g * tau0 + mc.psi;
      return 0.5 * mc.g1 * integrate_linear_cos(a, b, omega, theta, mc.T);
    }
    return simpson([&](double t) { return (a + b * t) * mod_.low_pass(t, tau0 + tau_rate * t); }, 0.0, mc.T, 512);
  }

  const Scene& scene_;
  AnalyticConfig cfg_;
  PathTracer tracer_;
  Modulator mod_;
  PathRecord x_, y_;
};

inline FrameBuffers render_analytic_approx(const Scene& scene, const AnalyticConfig& cfg) {
  cfg.base.modulation.validate();
  if (cfg.base.spp <= 0) throw Error("spp must be positive");
  return render_tiles(scene, cfg.base.workers, [&] { return AnalyticPixelEstimator(scene, cfg); });
}

}  // namespace dtof
