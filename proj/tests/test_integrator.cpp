// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "dtof/integrator.hpp"
#include "dtof/quadrature.hpp"
#include "dtof/scene_io.hpp"

using namespace dtof;
namespace fs = std::filesystem;

namespace {

constexpr double kT = 1.5e-3;

Scene cornell(int res, bool moving = true) {
  Scene s = load_scene(fs::path(DTOF_SOURCE_DIR) / "scenes" / "cornell.json");
  s.camera.width = s.camera.height = res;
  if (!moving)
    for (auto& p : s.primitives) p.motion.atT = p.motion.at0;
  s.finalize();
  return s;
}

// Camera at the origin looking down +z at a square plate of half-size `half` at depth l.
Scene plate(double l, double albedo, double u, double vfov, int res = 1, double half = 5.0) {
  Scene s;
  s.exposure = kT;
  s.camera.origin = {0, 0, 0};
  s.camera.target = {0, 0, 1};
  s.camera.vfov = vfov;
  s.camera.width = s.camera.height = res;
  s.materials.push_back(Material{"plate", MaterialKind::diffuse, albedo});
  Primitive p;
  p.name = "plate";
  p.shape = Rectangle{{-half, -half, l}, {2 * half, 0, 0}, {0, 2 * half, 0}};
  p.motion.atT.translation = {0, 0, u * kT};
  s.primitives.push_back(p);
  Emitter e;
  e.kind = EmitterKind::point;
  e.intensity = 2.0;
  s.emitters.push_back(e);
  s.finalize();
  return s;
}

IntegratorConfig config(double omega_tilde, TimeStrategy st, MappingKind m, int spp, double T = kT) {
  IntegratorConfig c;
  c.modulation.T = T;
  c.modulation.set_omega_tilde(omega_tilde);
  c.strategy = st;
  c.mapping = m;
  c.spp = spp;
  c.workers = 1;
  return c;
}

double path_length_to(const Scene& s, const PathRecord& r, int k) {
  double len = length(r.v[1].its.p - s.camera.origin);
  for (int j = 2; j <= k; ++j) len += length(r.v[j].its.p - r.v[j - 1].its.p) * r.v[j].medium;
  return len;
}

double mean_of(const Image& img) {
  double s = 0;
  for (double v : img.data) s += v;
  return s / double(img.size());
}

}  // namespace

TEST(Config, Validation) {
  auto ok = config(1.0, TimeStrategy::shifted, MappingKind::replay, 64);
  EXPECT_NO_THROW(ok.validate());
  auto c = ok;
  c.spp = 63;
  EXPECT_THROW(c.validate(), Error);
  c = ok;
  c.k_d = 5;
  EXPECT_THROW(c.validate(), Error);
  c = ok;
  c.n_t = 6;
  c.spp = 60;
  EXPECT_THROW(c.validate(), Error);  // periodic N_t must be a power of two
  c = ok;
  c.n_t = 4;
  c.mapping = MappingKind::reconnect;
  EXPECT_THROW(c.validate(), Error);
  c.mapping = MappingKind::replay;
  EXPECT_NO_THROW(c.validate());
  c = ok;
  c.t_s = 2 * kT;
  EXPECT_THROW(c.validate(), Error);
  c = ok;
  c.n_t = 1;
  EXPECT_THROW(c.validate(), Error);
  c.strategy = TimeStrategy::uniform;
  EXPECT_NO_THROW(c.validate());
  c = ok;
  c.max_depth = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(mapping_from_string("random-replay"), MappingKind::replay);
  EXPECT_EQ(mapping_from_string("reconnection"), MappingKind::reconnect);
  EXPECT_THROW(mapping_from_string("teleport"), Error);
  Scene s = cornell(4);
  c = ok;
  c.modulation.T = 1e-3;
  EXPECT_THROW(render(s, c), Error);
}

TEST(TracePrimal, SingleBounceRadiometry) {
  const double l = 2.5, albedo = 0.6;
  Scene s = plate(l, albedo, 0.0, 0.5, 5);
  auto cfg = config(0.0, TimeStrategy::shifted, MappingKind::replay, 2);
  PathTracer tracer(s, cfg);
  PathRecord r;
  for (int py = 0; py < 5; ++py)
    for (int px = 0; px < 5; ++px)
      for (uint32_t pair = 0; pair < 8; ++pair) {
        tracer.trace_primal(px, py, pair, 0.3 * kT, r);
        ASSERT_GE(r.n, 1);
        Vec3 p = r.v[1].its.p;
        double d = length(p);
        double cos_t = p.z / d;
        EXPECT_NEAR(p.z, l, 1e-12);
        ASSERT_TRUE(r.nee[1].present);
        double expected = albedo / kPi * cos_t * 2.0 / (d * d);
        EXPECT_NEAR(r.nee[1].value, expected, 1e-12 * expected);
        EXPECT_NEAR(r.nee[1].tau, 2.0 * d / kSpeedOfLight, 1e-12 * r.nee[1].tau);
        EXPECT_FALSE(r.hit[1].present);
        // Light leaving the plate never comes back.
        for (int k = 2; k <= kMaxDepth; ++k) EXPECT_FALSE(r.nee[k].present && r.nee[k].value != 0.0);
      }
}

TEST(TracePrimal, EmitterOffGivesZero) {
  Scene s = cornell(8);
  s.emitters.clear();
  s.finalize();
  auto fb = render(s, config(0.0, TimeStrategy::shifted, MappingKind::replay, 8));
  for (size_t i = 0; i < fb.dtof.size(); ++i) {
    EXPECT_EQ(fb.dtof.data[i], 0.0);
    EXPECT_EQ(fb.intensity.data[i], 0.0);
  }
  Scene z = cornell(8);
  z.emitters[0].intensity = 0.0;
  fb = render(z, config(0.0, TimeStrategy::uniform, MappingKind::none, 8));
  for (double v : fb.intensity.data) EXPECT_EQ(v, 0.0);
}

TEST(TracePrimal, MirrorFloorTwoBounceTimeOfFlight) {
  Scene s;
  s.exposure = kT;
  s.camera.origin = {0, 1, -1};
  s.camera.target = {0, 0, 0};
  s.camera.up = {0, 0, 1};
  s.camera.vfov = 1e-7;
  s.camera.width = s.camera.height = 1;
  s.materials = {Material{"mirror", MaterialKind::mirror, 1.0}, Material{"wall", MaterialKind::diffuse, 0.5}};
  Primitive floor{"floor", Rectangle{{-3, 0, -3}, {0, 0, 6}, {6, 0, 0}}, {}, 0, -1};
  Primitive wall{"wall", Rectangle{{-3, -1, 1}, {6, 0, 0}, {0, 6, 0}}, {}, 1, -1};
  s.primitives = {floor, wall};
  s.emitters.push_back(Emitter{});
  s.finalize();
  auto cfg = config(0.0, TimeStrategy::shifted, MappingKind::replay, 2);
  PathTracer tracer(s, cfg);
  PathRecord r;
  tracer.trace_primal(0, 0, 0, 0.0, r);
  ASSERT_GE(r.n, 2);
  EXPECT_EQ(r.v[1].its.prim, 0);
  EXPECT_EQ(r.v[2].its.prim, 1);
  EXPECT_FALSE(r.nee[1].present);  // no NEE from a mirror
  ASSERT_TRUE(r.nee[2].present);
  const double geo = std::sqrt(2.0) + std::sqrt(2.0) + 2.0;
  EXPECT_NEAR(r.nee[2].tau * kSpeedOfLight, geo, 1e-6);
  double exact = path_length_to(s, r, 2) + length(r.v[2].its.p - s.camera.origin);
  EXPECT_NEAR(r.nee[2].tau * kSpeedOfLight, exact, 1e-12 * exact);
}

TEST(TracePrimal, TauBookkeepingMatchesGeometry) {
  Scene s = cornell(16);
  // A moving glass ball puts some segments inside a medium.
  s.materials.push_back(Material{"glass", MaterialKind::dielectric, 1.0, 0.3, 1.5});
  Primitive ball{"ball", Sphere{{0.4, -0.6, -0.2}, 0.35}, {}, int(s.materials.size()) - 1, -1};
  ball.motion.atT.translation = {0.0, 0.02, 0.0};
  s.primitives.push_back(ball);
  s.finalize();
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::replay, 16);
  cfg.max_depth = 8;
  PathTracer tracer(s, cfg);
  PathRecord r;
  int checked = 0, refracted = 0;
  const Vec3 light = s.camera.origin;
  for (int py = 0; py < 16; ++py)
    for (int px = 0; px < 16; ++px)
      for (uint32_t pair = 0; pair < 8; ++pair) {
        tracer.trace_primal(px, py, pair, kT * pair / 8.0, r);
        SceneInstant inst(s, r.time);
        for (int j = 2; j <= r.n; ++j) {
          // Independent medium check: the segment lies inside the ball iff its midpoint does.
          Vec3 mid = (r.v[j].its.p + r.v[j - 1].its.p) * 0.5;
          Vec3 c = inst.transform(int(s.primitives.size()) - 1).point({0.4, -0.6, -0.2});
          bool inside = length(mid - c) < 0.35;
          EXPECT_EQ(r.v[j].medium, inside ? 1.5 : 1.0);
          refracted += inside;
        }
        for (int k = 1; k <= r.n; ++k) {
          double prefix = path_length_to(s, r, k);
          EXPECT_NEAR(r.v[k].tau * kSpeedOfLight, prefix, 1e-12 * prefix);
          if (r.nee[k].present) {
            double len = prefix + length(light - r.v[k].its.p) * r.v[k].medium;
            EXPECT_NEAR(r.nee[k].tau * kSpeedOfLight, len, 1e-12 * len);
            ++checked;
          }
        }
      }
  EXPECT_GT(checked, 1000);
  EXPECT_GT(refracted, 10);
}

TEST(Replay, StaticSceneReproducesPrimal) {
  Scene s = cornell(8, false);
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::replay, 2);
  PathTracer tracer(s, cfg);
  PathRecord x, y;
  for (uint32_t pair = 0; pair < 32; ++pair) {
    tracer.trace_primal(3, 4, pair, 0.2 * kT, x);
    tracer.trace_antithetic(3, 4, pair, 0.7 * kT, x, detail::independent_role(1), cfg.mapped_depth(), y);
    ASSERT_EQ(x.n, y.n);
    EXPECT_EQ(y.failure, ShiftFailure::none);
    for (int k = 1; k <= x.n; ++k) {
      EXPECT_EQ(x.v[k].its.p, y.v[k].its.p);
      EXPECT_EQ(x.nee[k].value, y.nee[k].value);
      EXPECT_EQ(x.nee[k].tau, y.nee[k].tau);
      EXPECT_EQ(x.v[k].beta, y.v[k].beta);
    }
  }
}

TEST(Replay, AxiallyTranslatingPlateShiftsTau) {
  const double u = 40.0;
  Scene s = plate(2.0, 0.5, u, 0.3, 4);
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::replay, 2);
  PathTracer tracer(s, cfg);
  PathRecord x, y;
  for (int px = 0; px < 4; ++px)
    for (uint32_t pair = 0; pair < 8; ++pair) {
      double tp = 0.1 * kT, ta = 0.85 * kT;
      tracer.trace_primal(px, 1, pair, tp, x);
      tracer.trace_antithetic(px, 1, pair, ta, x, detail::independent_role(1), cfg.mapped_depth(), y);
      ASSERT_TRUE(x.nee[1].present && y.nee[1].present);
      double dz = normalize(x.v[1].its.p).z;  // same camera ray for both
      double expected = 2.0 * u * (ta - tp) / (kSpeedOfLight * dz);
      EXPECT_NEAR(y.nee[1].tau - x.nee[1].tau, expected, 1e-6 * expected);
      EXPECT_NEAR(length(normalize(y.v[1].its.p) - normalize(x.v[1].its.p)), 0.0, 1e-12);
    }
}

TEST(Replay, SilhouetteMissIsStillValid) {
  // A narrow plate sliding sideways; rays near its edge miss it at the antithetic time.
  Scene s;
  s.exposure = kT;
  s.camera.origin = {0, 0, 0};
  s.camera.target = {0, 0, 1};
  s.camera.vfov = 0.2;
  s.camera.width = s.camera.height = 8;
  Primitive p{"plate", Rectangle{{-0.1, -1, 2}, {0.2, 0, 0}, {0, 2, 0}}, {}, 0, -1};
  p.motion.atT.translation = {0.15, 0, 0};
  s.primitives.push_back(p);
  s.emitters.push_back(Emitter{});
  s.finalize();
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::replay, 2);
  PathTracer tracer(s, cfg);
  PathRecord x, y;
  int lost = 0;
  for (int px = 0; px < 8; ++px)
    for (uint32_t pair = 0; pair < 16; ++pair) {
      tracer.trace_primal(px, 4, pair, 0.0, x);
      tracer.trace_antithetic(px, 4, pair, kT, x, detail::independent_role(1), cfg.mapped_depth(), y);
      EXPECT_EQ(y.failure, ShiftFailure::none);
      if (x.n >= 1 && y.n == 0) {
        ++lost;
        EXPECT_EQ(y.lost, ShiftFailure::miss);
      }
    }
  EXPECT_GT(lost, 0);
}

TEST(Reconnect, StaticSceneIsIdentity) {
  Scene s = cornell(8, false);
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::reconnect, 2);
  PathTracer tracer(s, cfg);
  PathRecord x, y;
  for (uint32_t pair = 0; pair < 64; ++pair) {
    tracer.trace_primal(2, 5, pair, 0.1 * kT, x);
    tracer.trace_antithetic(2, 5, pair, 0.6 * kT, x, detail::independent_role(1), cfg.mapped_depth(), y);
    // A primal that escaped the box leaves nothing to reconnect to.
    if (y.failure == ShiftFailure::non_bijective) {
      EXPECT_EQ(y.fail_at, x.n + 1);
      EXPECT_LT(x.n, cfg.max_depth);
    } else {
      ASSERT_EQ(y.failure, ShiftFailure::none);
    }
    ASSERT_EQ(x.n, y.n);
    for (int k = 1; k <= x.n; ++k) {
      EXPECT_LE(length(x.v[k].its.p - y.v[k].its.p), 1e-12);
      EXPECT_NEAR(y.ratio_at(k), 1.0, 1e-6);
      EXPECT_EQ(y.v[k].reconnected, k >= 2);
      EXPECT_NEAR(y.nee[k].value, x.nee[k].value, 1e-10 * std::abs(x.nee[k].value));
    }
  }
}

TEST(Reconnect, MovingOccluderFails) {
  // Floor below, ceiling above; a ball slides into the gap by the antithetic time.
  Scene s;
  s.exposure = kT;
  s.camera.origin = {0, 0.5, -3};
  s.camera.target = {0, 0, 0};
  s.camera.vfov = 0.3;
  s.camera.width = s.camera.height = 4;
  Primitive floor{"floor", Rectangle{{-2, 0, -2}, {0, 0, 4}, {4, 0, 0}}, {}, 0, -1};
  Primitive ceil{"ceiling", Rectangle{{-2, 1, -2}, {4, 0, 0}, {0, 0, 4}}, {}, 0, -1};
  Primitive ball{"ball", Sphere{{0, 0.5, 0}, 0.45}, {}, 0, -1};
  ball.motion.at0.translation = {-10, 0, 0};
  ball.motion.atT.translation = {0, 0, 0};
  s.primitives = {floor, ceil, ball};
  s.emitters.push_back(Emitter{});
  s.finalize();
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::reconnect, 2);
  PathTracer tracer(s, cfg);
  PathRecord x, y;
  int occluded = 0;
  SceneInstant at_T(s, kT);
  for (int py = 0; py < 4; ++py)
    for (int px = 0; px < 4; ++px)
      for (uint32_t pair = 0; pair < 32; ++pair) {
        tracer.trace_primal(px, py, pair, 0.0, x);
        tracer.trace_antithetic(px, py, pair, kT, x, detail::independent_role(1), cfg.mapped_depth(), y);
        if (y.failure != ShiftFailure::occluded) continue;
        ++occluded;
        int j = y.fail_at;
        ASSERT_GE(j, 2);
        Vec3 target = at_T.evolve(x.v[j].its.handle).p;
        EXPECT_TRUE(at_T.occluded(y.v[j - 1].its.p, target));
      }
  EXPECT_GT(occluded, 10);
}

TEST(Reconnect, ReverseMapIsInverseAndWeightsSumToOne) {
  Scene s = cornell(8);
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::reconnect, 2);
  PathTracer tracer(s, cfg);
  PathRecord x, y, back;
  int checked = 0;
  for (int py = 0; py < 8; py += 3)
    for (int px = 0; px < 8; px += 3)
      for (uint32_t pair = 0; pair < 16; ++pair) {
        double t = kT * (0.05 + 0.4 * pair / 16.0), ta = t + 0.5 * kT;
        tracer.trace_primal(px, py, pair, t, x);
        tracer.trace_antithetic(px, py, pair, ta, x, detail::independent_role(1), cfg.mapped_depth(), y);
        if (y.failure != ShiftFailure::none || y.n != x.n) continue;
        tracer.trace_antithetic(px, py, pair, t, y, detail::independent_role(1), cfg.mapped_depth(), back);
        ASSERT_EQ(back.failure, ShiftFailure::none);
        ASSERT_EQ(back.n, x.n);
        for (int k = 1; k <= x.n; ++k) {
          EXPECT_LE(length(back.v[k].its.p - x.v[k].its.p), 1e-9);
          double r = y.ratio_at(k), rb = back.ratio_at(k);
          EXPECT_NEAR(r * rb, 1.0, 1e-6);
          // Primal-technique weight of x plus its weight as the image of y.
          EXPECT_NEAR(1.0 / (1.0 + r) + 1.0 / (1.0 + rb), 1.0, 1e-6);
          if (x.nee[k].present && x.nee[k].value > 0) {
            EXPECT_NEAR(back.nee[k].value, x.nee[k].value, 1e-8 * x.nee[k].value);
            EXPECT_NEAR(back.nee[k].tau, x.nee[k].tau, 1e-12 * x.nee[k].tau);
          }
        }
        ++checked;
      }
  EXPECT_GT(checked, 50);
}

TEST(Adaptive, AllDiffuseMatchesReconnect) {
  Scene s = cornell(8);
  auto ca = config(1.0, TimeStrategy::shifted, MappingKind::adaptive, 2);
  auto cr = config(1.0, TimeStrategy::shifted, MappingKind::reconnect, 2);
  PathTracer ta(s, ca), tr(s, cr);
  PathRecord x, ya, yr;
  for (uint32_t pair = 0; pair < 64; ++pair) {
    ta.trace_primal(4, 4, pair, 0.2 * kT, x);
    ta.trace_antithetic(4, 4, pair, 0.7 * kT, x, detail::independent_role(1), ca.mapped_depth(), ya);
    tr.trace_antithetic(4, 4, pair, 0.7 * kT, x, detail::independent_role(1), cr.mapped_depth(), yr);
    // Reconnection fails where the primal ended; the adaptive rule replays there instead.
    int upto = std::min(ya.n, yr.n);
    if (yr.failure == ShiftFailure::non_bijective) upto = std::min(upto, yr.fail_at - 1);
    for (int k = 1; k <= upto; ++k) {
      EXPECT_EQ(ya.v[k].its.p, yr.v[k].its.p);
      EXPECT_EQ(ya.v[k].reconnected, yr.v[k].reconnected);
      EXPECT_EQ(ya.nee[k].value, yr.nee[k].value);
    }
    if (yr.failure != ShiftFailure::non_bijective) {
      EXPECT_EQ(ya.n, yr.n);
      EXPECT_EQ(ya.failure, yr.failure);
    }
  }
}

TEST(Adaptive, AllMirrorMatchesReplay) {
  Scene s = cornell(8);
  for (auto& m : s.materials) m.kind = MaterialKind::mirror;
  s.finalize();
  auto ca = config(1.0, TimeStrategy::shifted, MappingKind::adaptive, 2);
  auto cr = config(1.0, TimeStrategy::shifted, MappingKind::replay, 2);
  PathTracer ta(s, ca), tr(s, cr);
  PathRecord x, ya, yr;
  for (uint32_t pair = 0; pair < 32; ++pair) {
    ta.trace_primal(3, 3, pair, 0.0, x);
    ta.trace_antithetic(3, 3, pair, 0.5 * kT, x, detail::independent_role(1), ca.mapped_depth(), ya);
    tr.trace_antithetic(3, 3, pair, 0.5 * kT, x, detail::independent_role(1), cr.mapped_depth(), yr);
    ASSERT_EQ(ya.n, yr.n);
    for (int k = 1; k <= ya.n; ++k) {
      EXPECT_EQ(ya.v[k].its.p, yr.v[k].its.p);
      EXPECT_FALSE(ya.v[k].reconnected);
    }
  }
}

TEST(Adaptive, RuleTraceOnMixedScene) {
  Scene s = cornell(8);
  s.materials[3].kind = MaterialKind::mirror;  // the box
  for (auto& p : s.primitives) p.motion.atT.translation = p.motion.atT.translation * 20.0;
  s.finalize();
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::adaptive, 2);
  cfg.max_depth = 6;
  PathTracer tracer(s, cfg);
  PathRecord x, y;
  auto D = [](const PathRecord& r, int j) { return j >= 1 && j <= r.n && r.v[j].mat->is_diffuse_for_mapping(); };
  int diffuse_then_mirror = 0, nonbij = 0;
  for (int py = 0; py < 8; ++py)
    for (int px = 0; px < 8; ++px)
      for (uint32_t pair = 0; pair < 64; ++pair) {
        tracer.trace_primal(px, py, pair, 0.1 * kT, x);
        tracer.trace_antithetic(px, py, pair, 0.6 * kT, x, detail::independent_role(1), cfg.mapped_depth(), y);
        for (int j = 2; j <= y.n; ++j) {
          bool rule = D(x, j - 1) && D(y, j - 1) && D(x, j);
          EXPECT_EQ(y.v[j].reconnected, rule) << "vertex " << j;
          if (j + 1 <= y.n && y.v[j].reconnected && !y.v[j + 1].reconnected && !D(x, j + 1)) ++diffuse_then_mirror;
        }
        if (y.failure == ShiftFailure::non_bijective) {
          ++nonbij;
          int j = y.fail_at;
          // The replayed vertex would have been reconnected by the reverse map.
          EXPECT_TRUE(D(y, j - 1) && D(x, j - 1));
          EXPECT_FALSE(D(x, j));
        }
      }
  EXPECT_GT(diffuse_then_mirror, 0);
  EXPECT_GT(nonbij, 0);
}

TEST(EstimatePixel, StaticHeterodyneIsZero) {
  Scene s = cornell(8, false);
  for (auto st : {TimeStrategy::shifted, TimeStrategy::uniform, TimeStrategy::stratified, TimeStrategy::mirrored}) {
    auto cfg = config(1.0, st, st == TimeStrategy::shifted ? MappingKind::replay : MappingKind::none, 256);
    cfg.t_s = st == TimeStrategy::mirrored ? 0.0 : -1.0;
    auto r = estimate_pixel(s, 4, 5, cfg);
    auto ref = estimate_pixel(s, 4, 5, config(0.0, TimeStrategy::uniform, MappingKind::none, 256));
    ASSERT_GT(ref.intensity, 0.0);
    if (st == TimeStrategy::shifted) {
      EXPECT_LE(std::abs(r.dtof), 1e-12 * ref.intensity);
      EXPECT_LE(r.variance, 1e-24 * ref.intensity * ref.intensity);
    } else {
      EXPECT_LE(std::abs(r.dtof), 5.0 * std::sqrt(r.variance)) << to_string(st);
    }
  }
  auto periodic = config(1.0, TimeStrategy::shifted, MappingKind::replay, 256);
  periodic.n_t = 8;
  auto r = estimate_pixel(s, 4, 5, periodic);
  auto ref = estimate_pixel(s, 4, 5, config(0.0, TimeStrategy::uniform, MappingKind::none, 256));
  EXPECT_LE(std::abs(r.dtof), 1e-12 * ref.intensity);
}

TEST(EstimatePixel, StaticHomodyneMatchesQuadrature) {
  const double l = 3.0, albedo = 0.8;
  Scene s = plate(l, albedo, 0.0, 1e-7);
  for (double psi : {0.0, 0.7, 2.0}) {
    auto cfg = config(0.0, TimeStrategy::shifted, MappingKind::replay, 16);
    cfg.modulation.psi = psi;
    cfg.modulation.omega_g = kTwoPi * 20e6;
    auto r = estimate_pixel(s, 0, 0, cfg);
    const double L = albedo / kPi * 2.0 / (l * l);
    const double tau = 2.0 * l / kSpeedOfLight;
    double q = simpson([&](double t) { return eval_modulation_term(cfg.modulation, t, tau); }, 0.0, kT);
    EXPECT_NEAR(r.dtof, L * q, 1e-6 * L * kT) << "psi=" << psi;
    EXPECT_NEAR(r.dtof, kT * 0.5 * std::cos(cfg.modulation.omega_g * tau + psi) * L, 1e-6 * L * kT);
    EXPECT_NEAR(r.intensity, kT * L, 1e-9 * kT * L);
  }
}

TEST(EstimatePixel, AreaLightDirectMatchesIrradianceQuadrature) {
  // Diffuse floor under a square emitter; the camera looks straight down at the origin.
  Scene s;
  s.exposure = kT;
  s.camera.origin = {3, 3, 0};
  s.camera.target = {0, 0, 0};
  s.camera.up = {0, 0, 1};
  s.camera.vfov = 1e-6;
  s.camera.width = s.camera.height = 1;
  s.materials = {Material{"floor", MaterialKind::diffuse, 0.5}, Material{"lamp", MaterialKind::diffuse, 0.0}};
  const Vec3 corner{-0.5, 1.0, -0.2}, e1{1.0, 0, 0}, e2{0, 0, 0.6};  // normal −y
  s.primitives = {Primitive{"floor", Rectangle{{-5, 0, -5}, {0, 0, 10}, {10, 0, 0}}, {}, 0, -1},
                  Primitive{"lamp", Rectangle{corner, e1, e2}, {}, 1, -1}};
  Emitter e;
  e.kind = EmitterKind::area;
  e.radiance = 3.0;
  e.primitive = 1;
  s.emitters.push_back(e);
  s.finalize();
  ASSERT_LT(std::get<Rectangle>(s.primitives[1].shape).normal().y, 0.0);
  // E = ∫ L cosθ_p cosθ_l / r² dA by midpoint rule.
  const int n = 1000;
  double E = 0.0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      Vec3 q = corner + e1 * ((i + 0.5) / n) + e2 * ((k + 0.5) / n);
      double r2 = dot(q, q);
      double c = q.y / std::sqrt(r2);
      E += 3.0 * c * c / r2;
    }
  E *= 0.6 * 1.0 / (double(n) * n);
  const double L = 0.5 / kPi * E;
  for (int depth : {2, 3}) {
    auto cfg = config(0.0, TimeStrategy::uniform, MappingKind::none, 40000);
    cfg.max_depth = depth;
    auto r = estimate_pixel(s, 0, 0, cfg);
    EXPECT_NEAR(r.intensity / kT, L, 0.01 * L) << "depth " << depth;
  }
  // Looking straight at the front face of the emitter.
  s.camera.origin = {0, 0.5, 0};
  s.camera.target = {0, 1.5, 0.0};
  s.finalize();
  auto r = estimate_pixel(s, 0, 0, config(0.0, TimeStrategy::uniform, MappingKind::none, 4));
  EXPECT_NEAR(r.intensity, 3.0 * kT, 1e-12);
}

TEST(Render, StaticHeterodyneWithinNoise) {
  Scene s = cornell(64, false);
  auto fb = render(s, config(1.0, TimeStrategy::shifted, MappingKind::replay, 8));
  for (size_t i = 0; i < fb.dtof.size(); ++i)
    EXPECT_LE(std::abs(fb.dtof.data[i]), 3.0 * std::sqrt(fb.variance.data[i]) + 1e-12 * fb.intensity.data[i]);
  // With independent sampling the variance buffer is calibrated: mean z² ≈ 1.
  auto u = render(s, config(1.0, TimeStrategy::uniform, MappingKind::none, 64));
  double z2 = 0.0;
  int n = 0;
  for (size_t i = 0; i < u.dtof.size(); ++i) {
    if (u.variance.data[i] <= 0) continue;
    z2 += u.dtof.data[i] * u.dtof.data[i] / u.variance.data[i];
    ++n;
  }
  ASSERT_GT(n, 1000);
  EXPECT_NEAR(z2 / n, 1.0, 0.15);
}

TEST(Render, DoublingSamplesHalvesVariance) {
  Scene s = cornell(16);
  auto a = render(s, config(1.0, TimeStrategy::uniform, MappingKind::none, 128));
  auto b = render(s, config(1.0, TimeStrategy::uniform, MappingKind::none, 256));
  double ratio = mean_of(a.variance) / mean_of(b.variance);
  EXPECT_GT(ratio, 2.0 * 0.8);
  EXPECT_LT(ratio, 2.0 * 1.2);
}

TEST(Render, DeterministicAcrossWorkers) {
  Scene s = cornell(20);
  for (auto m : {MappingKind::replay, MappingKind::adaptive}) {
    auto cfg = config(0.7, TimeStrategy::shifted, m, 8);
    cfg.workers = 1;
    auto a = render(s, cfg);
    cfg.workers = 3;
    auto b = render(s, cfg);
    auto c = render(s, cfg);
    EXPECT_EQ(a.dtof.data, b.dtof.data);
    EXPECT_EQ(a.intensity.data, b.intensity.data);
    EXPECT_EQ(a.variance.data, b.variance.data);
    EXPECT_EQ(b.dtof.data, c.dtof.data);
    std::ostringstream da, db;
    a.diag.write_csv(da, cfg);
    b.diag.write_csv(db, cfg);
    EXPECT_EQ(da.str(), db.str());
  }
}

TEST(Render, SeedChangesResult) {
  Scene s = cornell(8);
  auto cfg = config(1.0, TimeStrategy::uniform, MappingKind::none, 8);
  auto a = render(s, cfg);
  cfg.seed = 2;
  auto b = render(s, cfg);
  EXPECT_NE(a.dtof.data, b.dtof.data);
}

TEST(Mis, UniformHalfWeightsOnStaticSceneChangeNothing) {
  Scene s = cornell(12, false);
  auto rep = render(s, config(0.6, TimeStrategy::shifted, MappingKind::replay, 16));
  auto rec = render(s, config(0.6, TimeStrategy::shifted, MappingKind::reconnect, 16));
  auto ada = render(s, config(0.6, TimeStrategy::shifted, MappingKind::adaptive, 16));
  for (size_t i = 0; i < rep.dtof.size(); ++i) {
    double scale = 1e-6 * std::max(1e-30, rep.intensity.data[i]);
    EXPECT_NEAR(rec.dtof.data[i], rep.dtof.data[i], scale);
    EXPECT_NEAR(ada.dtof.data[i], rep.dtof.data[i], scale);
  }
}

TEST(Mis, WeightHistogramAndFailureRates) {
  Scene s = cornell(16);
  auto fb = render(s, config(1.0, TimeStrategy::shifted, MappingKind::reconnect, 16));
  uint64_t hist = 0;
  for (auto h : fb.diag.weight_hist) hist += h;
  EXPECT_GT(hist, 0u);
  EXPECT_EQ(fb.diag.pairs, 16u * 16u * 8u);
  EXPECT_EQ(fb.diag.antithetic_paths, fb.diag.pairs);
  uint64_t f = 0;
  for (auto v : fb.diag.failures) f += v;
  EXPECT_EQ(f, fb.diag.antithetic_paths);
  std::ostringstream os;
  fb.diag.write_csv(os, config(1.0, TimeStrategy::shifted, MappingKind::reconnect, 16));
  EXPECT_NE(os.str().find("failure_rate_occluded,"), std::string::npos);
  EXPECT_NE(os.str().find("mis_weight_bin_9,"), std::string::npos);
}

TEST(Unbiased, MappingsAgreeWithIndependentSampling) {
  // Every mapping estimates the same integral; compare pixel means on a moving scene.
  Scene s = cornell(8);
  auto ref = render(s, config(0.5, TimeStrategy::uniform, MappingKind::none, 4096));
  for (auto m : {MappingKind::replay, MappingKind::reconnect, MappingKind::adaptive}) {
    auto fb = render(s, config(0.5, TimeStrategy::shifted, m, 1024));
    double chi = 0.0;
    for (size_t i = 0; i < fb.dtof.size(); ++i) {
      double var = fb.variance.data[i] + ref.variance.data[i];
      if (var <= 0) continue;
      double d = fb.dtof.data[i] - ref.dtof.data[i];
      chi += d * d / var;
    }
    EXPECT_LT(chi / double(fb.dtof.size()), 1.6) << to_string(m);
  }
}

TEST(Precision, SinglePrecisionCloseToDouble) {
  Scene s = cornell(8);
  auto cfg = config(0.4, TimeStrategy::shifted, MappingKind::replay, 16);
  auto d = render(s, cfg);
  cfg.precision = Precision::f32;
  auto f = render(s, cfg);
  double peak = 0;
  for (double v : d.intensity.data) peak = std::max(peak, v);
  for (size_t i = 0; i < d.dtof.size(); ++i) EXPECT_NEAR(f.dtof.data[i], d.dtof.data[i], 1e-4 * peak);
}

TEST(Precision, FullProductSinglePrecisionRings) {
  // Without low-pass filtering the phase ω_f·t is huge; float cannot resolve it.
  Scene s = cornell(8, false);
  auto cfg = config(1.0, TimeStrategy::shifted, MappingKind::replay, 64);
  cfg.modulation.low_pass = false;
  auto d = render(s, cfg);
  cfg.precision = Precision::f32;
  auto f = render(s, cfg);
  EXPECT_GT(mean_of(f.variance), 100.0 * mean_of(d.variance));
}

TEST(Analytic, StaticHomodyneEqualsUnbiased) {
  Scene s = cornell(8, false);
  auto base = config(0.0, TimeStrategy::shifted, MappingKind::replay, 32);
  base.modulation.psi = 0.4;
  auto fb = render(s, base);
  AnalyticConfig ac{base, false};
  ac.base.spp = base.n_pairs();
  auto an = render_analytic_approx(s, ac);
  for (size_t i = 0; i < fb.dtof.size(); ++i)
    EXPECT_NEAR(an.dtof.data[i], fb.dtof.data[i], 1e-9 * std::max(1e-30, fb.intensity.data[i]));
}

TEST(Analytic, StaticHeterodyneWithinNoise) {
  Scene s = cornell(8, false);
  auto base = config(0.3, TimeStrategy::uniform, MappingKind::replay, 64);
  auto fb = render(s, base);
  AnalyticConfig ac{base, false};
  ac.base.spp = 64;
  auto an = render_analytic_approx(s, ac);
  for (size_t i = 0; i < fb.dtof.size(); ++i)
    EXPECT_LE(std::abs(an.dtof.data[i] - fb.dtof.data[i]),
              5.0 * std::sqrt(fb.variance.data[i] + an.variance.data[i]) + 1e-12 * fb.intensity.data[i]);
  auto full = config(1.0, TimeStrategy::shifted, MappingKind::replay, 8);
  AnalyticConfig af{full, false};
  auto z = render_analytic_approx(s, af);
  for (size_t i = 0; i < z.dtof.size(); ++i) EXPECT_LE(std::abs(z.dtof.data[i]), 1e-9 * z.intensity.data[i] + 1e-300);
}

TEST(Analytic, FirstOrderBeatsZerothOnMovingPlate) {
  const double l = 0.4, u = 20.0;  // l grows by 7.5% over the exposure
  Scene s = plate(l, 0.7, u, 1e-6);
  for (double wt : {0.0, 1.0}) {
    auto base = config(wt, TimeStrategy::shifted, MappingKind::replay, 2);
    base.modulation.omega_g = kTwoPi * 10e6;
    auto exact = [&](double t) {
      double lt = l + u * t;
      return 0.7 / kPi * 2.0 / (lt * lt) * eval_modulation_term(base.modulation, t, 2.0 * lt / kSpeedOfLight);
    };
    const double ref = simpson(exact, 0.0, kT, 1 << 14);
    Diagnostics d;
    AnalyticPixelEstimator first(s, AnalyticConfig{base, false}), zeroth(s, AnalyticConfig{base, true});
    double e1 = std::abs(first.estimate(0, 0, d).dtof - ref);
    double e0 = std::abs(zeroth.estimate(0, 0, d).dtof - ref);
    EXPECT_LT(e1, 0.5 * e0) << "omega_tilde " << wt;
    if (wt == 0.0) {
      EXPECT_LT(e1, 0.01 * std::abs(ref));
      EXPECT_GT(e0, 0.05 * std::abs(ref));
    }
  }
  EXPECT_THROW(AnalyticPixelEstimator(s, AnalyticConfig{config(1.0, TimeStrategy::uniform, MappingKind::none, 2)}),
               Error);
}

TEST(EstimatePixel, RecedingPlanePairVarianceTwoOrdersBelowUniform) {
  Scene s = load_scene(fs::path(DTOF_SOURCE_DIR) / "scenes" / "receding_plane.json");
  auto pair_variance = [&](TimeStrategy st, MappingKind m) {
    std::vector<double> e;
    PairObserver obs = [&](const PairRecord& r) { e.push_back(r.estimate); };
    estimate_pixel(s, 32, 32, config(1.0, st, m, 512), nullptr, &obs);
    double mu = 0, v = 0;
    for (double x : e) mu += x / e.size();
    for (double x : e) v += (x - mu) * (x - mu) / (e.size() - 1);
    return v;
  };
  double uni = pair_variance(TimeStrategy::uniform, MappingKind::none);
  double sh = pair_variance(TimeStrategy::shifted, MappingKind::replay);
  EXPECT_GT(uni, 100.0 * sh) << uni << " vs " << sh;
}

TEST(Render, ZeroFrequencyBestStrategyIsNotShiftedFullMapping) {
  Scene s = cornell(24);
  auto variance = [&](TimeStrategy st, MappingKind m, int k_d) {
    auto c = config(0.0, st, m, 64);
    c.k_d = k_d;
    return mean_of(render(s, c).variance);
  };
  const double shifted_full = variance(TimeStrategy::shifted, MappingKind::replay, -1);
  const double others[] = {variance(TimeStrategy::mirrored, MappingKind::replay, -1),
                           variance(TimeStrategy::shifted, MappingKind::replay, 1),
                           variance(TimeStrategy::mirrored, MappingKind::replay, 1)};
  EXPECT_LT(*std::min_element(std::begin(others), std::end(others)), 0.9 * shifted_full);
}

TEST(Render, ShiftSweepMinimumAtHalfExposure) {
  Scene s = cornell(16);
  std::vector<double> v;
  for (int k = 0; k <= 10; ++k) {
    auto c = config(1.0, TimeStrategy::shifted, MappingKind::replay, 32);
    c.t_s = 0.1 * k * kT;
    v.push_back(mean_of(render(s, c).variance));
  }
  EXPECT_EQ(std::min_element(v.begin(), v.end()) - v.begin(), 5);
}
