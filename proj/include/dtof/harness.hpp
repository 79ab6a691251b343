// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dtof/integrator.hpp"
#include "dtof/metrics.hpp"
#include "dtof/scene_io.hpp"
#include "dtof/velocity.hpp"

namespace dtof {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config and metadata (JSON).

inline json to_json(const Waveform& w) { return {{"kind", std::string(to_string(w.kind))}, {"duty", w.duty}, {"rise", w.rise}}; }

inline Waveform waveform_from_json(const json& j) {
  Waveform w;
  if (j.is_string()) {
    w.kind = waveform_kind_from_string(j.get<std::string>());
    return w;
  }
  w.kind = waveform_kind_from_string(j.value("kind", "sinusoidal"));
  w.duty = j.value("duty", w.duty);
  w.rise = j.value("rise", w.rise);
  return w;
}

inline json to_json(const ModulationConfig& m) {
  return {{"omega_g", m.omega_g}, {"omega_d", m.omega_d}, {"psi", m.psi},   {"T", m.T},
          {"g0", m.g0},           {"g1", m.g1},           {"low_pass", m.low_pass},
          {"sensor_waveform", to_json(m.sensor_waveform)}, {"illum_waveform", to_json(m.illum_waveform)}};
}

inline ModulationConfig modulation_from_json(const json& j) {
  ModulationConfig m;
  m.omega_g = j.value("omega_g", m.omega_g);
  m.T = j.value("T", m.T);
  m.omega_d = j.value("omega_d", m.omega_d);
  if (j.contains("omega_tilde")) m.set_omega_tilde(j["omega_tilde"].get<double>());
  m.psi = j.value("psi", m.psi);
  m.g0 = j.value("g0", m.g0);
  m.g1 = j.value("g1", m.g1);
  m.low_pass = j.value("low_pass", m.low_pass);
  if (j.contains("sensor_waveform")) m.sensor_waveform = waveform_from_json(j["sensor_waveform"]);
  if (j.contains("illum_waveform")) m.illum_waveform = waveform_from_json(j["illum_waveform"]);
  return m;
}

inline json to_json(const IntegratorConfig& c) {
  return {{"modulation", to_json(c.modulation)},
          {"spp", c.spp},
          {"n_t", c.n_t},
          {"strategy", std::string(to_string(c.strategy))},
          {"t_s", c.shift()},
          {"mapping", std::string(to_string(c.mapping))},
          {"k_d", c.k_d},
          {"max_depth", c.max_depth},
          {"precision", c.precision == Precision::f64 ? 64 : 32},
          {"seed", c.seed}};
}

inline IntegratorConfig integrator_from_json(const json& j) {
  IntegratorConfig c;
  if (j.contains("modulation")) c.modulation = modulation_from_json(j["modulation"]);
  c.spp = j.value("spp", c.spp);
  c.n_t = j.value("n_t", c.n_t);
  if (j.contains("strategy")) c.strategy = time_strategy_from_string(j["strategy"].get<std::string>());
  c.t_s = j.value("t_s", c.t_s);
  if (j.contains("mapping")) c.mapping = mapping_from_string(j["mapping"].get<std::string>());
  c.k_d = j.value("k_d", c.k_d);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.precision = j.value("precision", 64) == 32 ? Precision::f32 : Precision::f64;
  c.seed = j.value("seed", c.seed);
  return c;
}

struct RenderMeta {
  IntegratorConfig config;
  std::string scene_hash;
  int width = 0, height = 0;
  std::string kind = "render";  // render | analytic | analytic0
};

inline json to_json(const RenderMeta& m) {
  return {{"config", to_json(m.config)}, {"scene_hash", m.scene_hash}, {"width", m.width}, {"height", m.height}, {"kind", m.kind}};
}

inline RenderMeta meta_from_json(const json& j) {
  RenderMeta m;
  m.config = integrator_from_json(j.at("config"));
  m.scene_hash = j.at("scene_hash").get<std::string>();
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.kind = j.value("kind", "render");
  return m;
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error("'" + p.string() + "': " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << j.dump(2) << "\n";
}

// Sidecar for a PFM buffer: <name>.pfm → <name>.json.
inline fs::path meta_path(const fs::path& pfm) {
  fs::path p = pfm;
  return p.replace_extension(".json");
}

inline void write_render_outputs(const fs::path& dir, const FrameBuffers& fb, const RenderMeta& meta) {
  fs::create_directories(dir);
  write_pfm(dir / "dtof.pfm", fb.dtof);
  write_pfm(dir / "intensity.pfm", fb.intensity);
  write_pfm(dir / "variance.pfm", fb.variance);
  std::ofstream diag(dir / "diag.csv");
  if (!diag) throw Error("cannot write '" + (dir / "diag.csv").string() + "'");
  fb.diag.write_csv(diag, meta.config);
  write_json_file(dir / "meta.json", to_json(meta));
}

// Reads a buffer and the metadata next to it: "<dir>/meta.json" or "<stem>.json".
inline std::pair<Image, RenderMeta> read_buffer_with_meta(const fs::path& pfm) {
  Image img = read_pfm(pfm);
  fs::path side = meta_path(pfm);
  if (!fs::exists(side)) side = pfm.parent_path() / "meta.json";
  if (!fs::exists(side)) throw Error("no metadata sidecar for '" + pfm.string() + "'");
  RenderMeta m = meta_from_json(read_json_file(side));
  if (m.width != img.width || m.height != img.height) throw Error("'" + pfm.string() + "': metadata resolution mismatch");
  return {std::move(img), std::move(m)};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Experiment sweeps.

struct SweepConfig {
  TimeStrategy strategy = TimeStrategy::shifted;
  MappingKind mapping = MappingKind::replay;
  int k_d = -1;
  int n_t = 2;
  double t_s = -1.0;

  std::string label() const {
    std::ostringstream os;
    os << to_string(strategy) << "_" << to_string(mapping) << "_kd" << k_d << "_nt" << n_t;
    if (t_s >= 0) os << "_ts" << t_s;
    return os.str();
  }
};

struct ReferenceSpec {
  TimeStrategy strategy = TimeStrategy::uniform;
  MappingKind mapping = MappingKind::none;
  int spp_factor = 64;
  uint64_t seed = 0x5EEDull;
};

struct ExperimentSpec {
  fs::path scene;
  std::vector<double> omega_tilde{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> psi{0.0, 0.4 * kPi, 0.8 * kPi, 1.2 * kPi, 1.6 * kPi};
  std::vector<SweepConfig> configs;
  int spp = 256;
  std::vector<uint64_t> seeds{1};
  ReferenceSpec reference;
  ModulationConfig modulation;  // ω_d and ψ are overwritten per grid point
  int max_depth = 4;
  int width = 0, height = 0;    // 0: scene resolution
  int workers = 0;
  fs::path output;              // per-config buffers land here when non-empty

  void validate() const {
    if (omega_tilde.empty() || psi.empty()) throw Error("experiment: the (omega_tilde, psi) grid is empty");
    if (configs.empty()) throw Error("experiment: no configurations");
    if (seeds.empty()) throw Error("experiment: no seeds");
    if (spp <= 0) throw Error("experiment: spp must be positive");
    if (reference.spp_factor < 64) throw Error("experiment: reference budget must be at least 64x the experiment spp");
  }
};

// Grid: either an explicit list or {"n": k} for k uniform points over [lo, hi].
inline std::vector<double> grid_from_json(const json& j, double lo, double hi, bool endpoint) {
  if (j.is_array()) return j.get<std::vector<double>>();
  int n = j.at("n").get<int>();
  return linspace(j.value("min", lo), j.value("max", hi), n, endpoint);
}

inline ExperimentSpec experiment_from_json(const json& j, const fs::path& base_dir = {}) {
  ExperimentSpec e;
  try {
    fs::path sp = j.at("scene").get<std::string>();
    e.scene = sp.is_absolute() ? sp : base_dir / sp;
    if (j.contains("omega_tilde")) e.omega_tilde = grid_from_json(j["omega_tilde"], 0.0, 1.0, true);
    if (j.contains("psi")) e.psi = grid_from_json(j["psi"], 0.0, kTwoPi, false);
    for (const auto& c : j.at("configs")) {
      SweepConfig s;
      s.strategy = time_strategy_from_string(c.value("strategy", "shifted"));
      s.mapping = mapping_from_string(c.value("mapping", "replay"));
      s.k_d = c.value("k_d", -1);
      s.n_t = c.value("n_t", 2);
      s.t_s = c.value("t_s", -1.0);
      e.configs.push_back(s);
    }
    e.spp = j.value("spp", e.spp);
    if (j.contains("seeds")) e.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("reference")) {
      const auto& r = j["reference"];
      e.reference.strategy = time_strategy_from_string(r.value("strategy", "uniform"));
      e.reference.mapping = mapping_from_string(r.value("mapping", "none"));
      e.reference.spp_factor = r.value("spp_factor", 64);
      e.reference.seed = r.value("seed", e.reference.seed);
    }
    if (j.contains("modulation")) e.modulation = modulation_from_json(j["modulation"]);
    e.max_depth = j.value("max_depth", e.max_depth);
    if (j.contains("resolution")) {
      e.width = j["resolution"].at(0).get<int>();
      e.height = j["resolution"].at(1).get<int>();
    }
    e.workers = j.value("workers", 0);
    if (j.contains("output")) {
      fs::path o = j["output"].get<std::string>();
      e.output = o.is_absolute() ? o : base_dir / o;
    }
  } catch (const json::exception& ex) {
    throw Error(std::string("experiment: ") + ex.what());
  }
  e.validate();
  return e;
}

struct SweepRow {
  double omega_tilde = 0, psi = 0;
  std::string config;
  uint64_t seed = 0;
  Metrics metrics;
};

struct SweepSummaryRow {
  double omega_tilde = 0;
  std::string config;
  MeanStd rmse, psnr, mae;
};

struct MetricsReport {
  std::vector<SweepRow> rows;
  std::vector<SweepSummaryRow> summary;

  void write_rows_csv(std::ostream& os) const {
    os << "omega_tilde,psi,config,seed,rmse,psnr,mae\n";
    for (const auto& r : rows)
      os << format_double(r.omega_tilde) << "," << format_double(r.psi) << "," << r.config << "," << r.seed << ","
         << format_double(r.metrics.rmse) << "," << format_double(r.metrics.psnr) << "," << format_double(r.metrics.mae)
         << "\n";
  }

  void write_summary_csv(std::ostream& os) const {
    os << "omega_tilde,config,rmse_mean,rmse_std,psnr_mean,psnr_std,mae_mean,mae_std\n";
    for (const auto& s : summary)
      os << format_double(s.omega_tilde) << "," << s.config << "," << format_double(s.rmse.mean) << ","
         << format_double(s.rmse.std) << "," << format_double(s.psnr.mean) << "," << format_double(s.psnr.std) << ","
         << format_double(s.mae.mean) << "," << format_double(s.mae.std) << "\n";
  }
};

inline IntegratorConfig sweep_integrator_config(const ExperimentSpec& e, double wt, double psi, const SweepConfig& s,
                                                uint64_t seed) {
  IntegratorConfig c;
  c.modulation = e.modulation;
  c.modulation.set_omega_tilde(wt);
  c.modulation.psi = psi;
  c.spp = e.spp;
  c.n_t = s.n_t;
  c.strategy = s.strategy;
  c.t_s = s.t_s;
  c.mapping = s.mapping;
  c.k_d = s.k_d;
  c.max_depth = e.max_depth;
  c.seed = seed;
  c.workers = 1;
  return c;
}

inline void check_reference(const RenderMeta& ref, const std::string& hash, int w, int h) {
  if (ref.scene_hash != hash) throw Error("reference scene hash mismatch");
  if (ref.width != w || ref.height != h) throw Error("reference resolution mismatch");
}

// Renders references (or reuses matching ones under `output`), then every
// configuration × seed; rows are ordered by (ω̃, ψ, config, seed).
inline MetricsReport run_sweep(const ExperimentSpec& e, Scene scene) {
  e.validate();
  if (e.width > 0) {
    scene.camera.width = e.width;
    scene.camera.height = e.height;
    scene.finalize();
  }
  ModulationConfig base = e.modulation;
  base.T = scene.exposure;
  ExperimentSpec spec = e;
  spec.modulation = base;
  const std::string hash = hex64(scene_hash(scene));
  const int w = scene.camera.width, h = scene.camera.height;
  const int workers = resolve_workers(e.workers);

  struct Job {
    size_t grid;
    int config;  // -1: reference
    size_t seed;
  };
  const size_t n_grid = e.omega_tilde.size() * e.psi.size();
  std::vector<Image> refs(n_grid);

  auto grid_at = [&](size_t g) { return std::pair{e.omega_tilde[g / e.psi.size()], e.psi[g % e.psi.size()]}; };

  auto ref_config = [&](size_t g) {
    auto [wt, psi] = grid_at(g);
    SweepConfig rs;
    rs.strategy = e.reference.strategy;
    rs.mapping = e.reference.mapping;
    IntegratorConfig c = sweep_integrator_config(spec, wt, psi, rs, e.reference.seed);
    c.spp = e.spp * e.reference.spp_factor;
    return c;
  };

  auto ref_dir = [&](size_t g) { return e.output / ("reference_" + std::to_string(g)); };

  parallel_for(int(n_grid), workers, [&](int g, int) {
    IntegratorConfig c = ref_config(size_t(g));
    if (!e.output.empty() && fs::exists(ref_dir(g) / "dtof.pfm")) {
      auto [img, meta] = read_buffer_with_meta(ref_dir(g) / "dtof.pfm");
      check_reference(meta, hash, w, h);
      if (to_json(meta.config) == to_json(c)) {
        refs[g] = std::move(img);
        return;
      }
    }
    FrameBuffers fb = render(scene, c);
    if (!e.output.empty()) write_render_outputs(ref_dir(g), fb, {c, hash, w, h, "render"});
    refs[g] = std::move(fb.dtof);
  });

  std::vector<Job> jobs;
  for (size_t g = 0; g < n_grid; ++g)
    for (int ci = 0; ci < int(e.configs.size()); ++ci)
      for (size_t si = 0; si < e.seeds.size(); ++si) jobs.push_back({g, ci, si});

  MetricsReport rep;
  rep.rows.resize(jobs.size());
  parallel_for(int(jobs.size()), workers, [&](int k, int) {
    const Job& jb = jobs[k];
    auto [wt, psi] = grid_at(jb.grid);
    const SweepConfig& sc = e.configs[jb.config];
    IntegratorConfig c = sweep_integrator_config(spec, wt, psi, sc, e.seeds[jb.seed]);
    FrameBuffers fb = render(scene, c);
    if (!e.output.empty()) {
      std::ostringstream dir;
      dir << "w" << jb.grid / e.psi.size() << "_p" << jb.grid % e.psi.size() << "_" << sc.label() << "_s" << c.seed;
      write_render_outputs(e.output / dir.str(), fb, {c, hash, w, h, "render"});
    }
    SweepRow& row = rep.rows[k];
    row.omega_tilde = wt;
    row.psi = psi;
    row.config = sc.label();
    row.seed = c.seed;
    row.metrics = compute_metrics(fb.dtof, refs[jb.grid]);
  });

  for (double wt : e.omega_tilde)
    for (const auto& sc : e.configs) {
      std::vector<double> rmse, psnr, mae;
      for (const auto& r : rep.rows)
        if (r.omega_tilde == wt && r.config == sc.label()) {
          rmse.push_back(r.metrics.rmse);
          psnr.push_back(r.metrics.psnr);
          mae.push_back(r.metrics.mae);
        }
      rep.summary.push_back({wt, sc.label(), mean_std(rmse), mean_std(psnr), mean_std(mae)});
    }
  return rep;
}

}  // namespace dtof
