// SPDX-License-Identifier: Apache-2.0
// dtof command-line driver: render, sweep, metrics, velocity, modlab.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dtof/dtof.hpp"

namespace {

using namespace dtof;

constexpr int kExitUsage = 1;
constexpr int kExitMissingInput = 2;
constexpr int kExitFailure = 3;

struct MissingInput : Error {
  using Error::Error;
};

Scene open_scene(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput("scene file not found: " + p.string());
  return load_scene(p);
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput("file not found: " + p.string());
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  file.open(p);
  if (!file) throw Error("cannot write '" + path + "'");
  return file;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string scene, out = "out";
  double omega_tilde = 0.0, psi = 0.0, freq_mhz = 30.0, t_s = -1.0;
  std::string strategy = "shifted", mapping = "replay", analytic = "off";
  std::string sensor_wave = "sinusoidal", illum_wave = "sinusoidal";
  int spp = 256, n_t = 2, k_d = -1, max_depth = 4, precision = 64, width = 0, height = 0, workers = 0;
  uint64_t seed = 1;
  bool low_pass = true;
};

void add_render_options(CLI::App* sub, RenderArgs& a) {
  sub->add_option("--scene", a.scene, "Scene file (JSON)")->required();
  sub->add_option("-o,--out", a.out, "Output directory");
  sub->add_option("--omega-tilde", a.omega_tilde, "Normalized heterodyne frequency ω_d T / 2π");
  sub->add_option("--psi", a.psi, "Sensor phase offset (rad)");
  sub->add_option("--freq-mhz", a.freq_mhz, "Illumination modulation frequency (MHz)");
  sub->add_option("--strategy", a.strategy, "uniform | stratified | shifted | mirrored | decorrelated");
  sub->add_option("--mapping", a.mapping, "none | replay | reconnect | adaptive");
  sub->add_option("--t-s", a.t_s, "Antithetic shift as a fraction of T (default: strategy default)");
  sub->add_option("--spp", a.spp, "Samples per pixel");
  sub->add_option("--n-t", a.n_t, "Time samples per group");
  sub->add_option("--k-d", a.k_d, "Maximum mapped depth (-1: all)");
  sub->add_option("--max-depth", a.max_depth, "Maximum path segments");
  sub->add_option("--seed", a.seed, "Random seed");
  sub->add_option("--low-pass", a.low_pass, "Low-pass modulation term (false: full product)");
  sub->add_option("--precision", a.precision, "Accumulation precision: 32 or 64")->check(CLI::IsMember({32, 64}));
  sub->add_option("--sensor-waveform", a.sensor_wave, "sinusoidal | rectangular | triangular | trapezoidal");
  sub->add_option("--illum-waveform", a.illum_wave, "sinusoidal | rectangular | triangular | trapezoidal");
  sub->add_option("--analytic", a.analytic, "off | first | zeroth (biased analytic approximation)");
  sub->add_option("--width", a.width, "Override image width");
  sub->add_option("--height", a.height, "Override image height");
  sub->add_option("--workers", a.workers, std::string("Worker threads (default: $") + kWorkersEnv + ")");
}

int run_render(const RenderArgs& a) {
  Scene scene = open_scene(a.scene);
  if (a.width > 0 || a.height > 0) {
    if (a.width > 0) scene.camera.width = a.width;
    if (a.height > 0) scene.camera.height = a.height;
    scene.finalize();
  }
  IntegratorConfig c;
  c.modulation.omega_g = kTwoPi * a.freq_mhz * 1e6;
  c.modulation.T = scene.exposure;
  c.modulation.set_omega_tilde(a.omega_tilde);
  c.modulation.psi = a.psi;
  c.modulation.low_pass = a.low_pass;
  c.modulation.sensor_waveform.kind = waveform_kind_from_string(a.sensor_wave);
  c.modulation.illum_waveform.kind = waveform_kind_from_string(a.illum_wave);
  c.spp = a.spp;
  c.n_t = a.n_t;
  c.strategy = time_strategy_from_string(a.strategy);
  c.t_s = a.t_s < 0 ? -1.0 : a.t_s * scene.exposure;
  c.mapping = mapping_from_string(a.mapping);
  c.k_d = a.k_d;
  c.max_depth = a.max_depth;
  c.precision = a.precision == 32 ? Precision::f32 : Precision::f64;
  c.seed = a.seed;
  c.workers = a.workers;
  for (const auto& w : c.modulation.validate()) std::cerr << "warning: " << w << "\n";

  auto t0 = std::chrono::steady_clock::now();
  FrameBuffers fb;
  std::string kind = "render";
  if (a.analytic == "off") {
    fb = render(scene, c);
  } else if (a.analytic == "first" || a.analytic == "zeroth") {
    AnalyticConfig ac{c, a.analytic == "zeroth"};
    fb = render_analytic_approx(scene, ac);
    kind = a.analytic == "zeroth" ? "analytic0" : "analytic";
  } else {
    throw Error("--analytic must be off, first or zeroth");
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RenderMeta meta{c, hex64(scene_hash(scene)), scene.camera.width, scene.camera.height, kind};
  write_render_outputs(a.out, fb, meta);
  std::cerr << "rendered " << scene.camera.width << "x" << scene.camera.height << " at " << c.spp << " spp in " << secs
            << " s -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_sweep_cmd(const std::string& exp_path, const std::string& out, int workers) {
  require_file(exp_path);
  ExperimentSpec e = experiment_from_json(read_json_file(exp_path), fs::path(exp_path).parent_path());
  if (workers > 0) e.workers = workers;
  if (!out.empty()) e.output = out;
  Scene scene = open_scene(e.scene);
  MetricsReport rep = run_sweep(e, scene);
  fs::path dir = e.output.empty() ? fs::path(".") : e.output;
  fs::create_directories(dir);
  std::ofstream rows(dir / "sweep_rows.csv"), summary(dir / "sweep_summary.csv");
  rep.write_rows_csv(rows);
  rep.write_summary_csv(summary);
  rep.write_summary_csv(std::cout);
  return 0;
}

int run_metrics_cmd(const std::string& buf, const std::string& ref) {
  require_file(buf);
  require_file(ref);
  Metrics m = compute_metrics(read_pfm(buf), read_pfm(ref));
  std::cout << "rmse,psnr,mae\n" << format_double(m.rmse) << "," << format_double(m.psnr) << "," << format_double(m.mae) << "\n";
  return 0;
}

Measurement load_measurement(const std::string& path) {
  require_file(path);
  auto [img, meta] = read_buffer_with_meta(path);
  return {meta.config.modulation, std::move(img)};
}

Image mask_image(const std::vector<uint8_t>& valid, int w, int h) {
  Image m(w, h);
  for (size_t i = 0; i < valid.size(); ++i) m.data[i] = valid[i];
  return m;
}

int run_velocity_cmd(const std::string& method, const std::vector<std::string>& het, const std::vector<std::string>& hom,
                     const std::string& out, const std::string& gt_scene) {
  std::vector<Measurement> h, o;
  for (const auto& p : het) h.push_back(load_measurement(p));
  for (const auto& p : hom) o.push_back(load_measurement(p));
  VelocityMap vm;
  if (method == "heide") {
    if (h.size() != 1 || o.size() != 1) throw Error("heide needs one --het and one --hom buffer");
    vm = estimate_velocity_heide(h[0], o[0]);
  } else if (method == "heide-mixed") {
    if (h.size() != 2 || o.size() != 2) throw Error("heide-mixed needs two --het and two --hom buffers");
    vm = estimate_velocity_heide_mixed(h[0], o[0], h[1], o[1]);
  } else if (method == "hu") {
    vm = estimate_velocity_hu(h, o);
  } else {
    throw Error("unknown velocity method '" + method + "'");
  }
  fs::create_directories(out);
  write_pfm(fs::path(out) / "velocity.pfm", vm.speed);
  write_pfm(fs::path(out) / "ratio.pfm", vm.ratio);
  write_pfm(fs::path(out) / "mask.pfm", mask_image(vm.valid, vm.speed.width, vm.speed.height));
  std::ofstream csv(fs::path(out) / "velocity_summary.csv");
  csv << "key,value\nvalid_fraction," << format_double(vm.valid_fraction()) << "\n";
  double sum = 0, sum_r = 0;
  size_t n = 0;
  for (size_t i = 0; i < vm.valid.size(); ++i)
    if (vm.valid[i]) {
      sum += vm.speed.data[i];
      sum_r += vm.ratio.data[i];
      ++n;
    }
  csv << "mean_speed," << format_double(n ? sum / n : 0.0) << "\nmean_ratio," << format_double(n ? sum_r / n : 0.0) << "\n";
  if (!gt_scene.empty()) {
    Scene s = open_scene(gt_scene);
    VelocityGroundTruth gt = ground_truth_velocity_map(s);
    if (!gt.speed.same_shape(vm.speed)) throw Error("ground-truth scene resolution differs from the buffers");
    write_pfm(fs::path(out) / "velocity_gt.pfm", gt.speed);
    double err = 0;
    size_t m = 0;
    for (size_t i = 0; i < vm.valid.size(); ++i)
      if (vm.valid[i] && gt.valid[i]) {
        err += std::abs(vm.speed.data[i] - gt.speed.data[i]);
        ++m;
      }
    csv << "mean_abs_error_vs_gt," << format_double(m ? err / m : 0.0) << "\n";
  }
  std::cout << "valid " << vm.valid_fraction() << ", mean speed " << (n ? sum / n : 0.0) << " m/s -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ModlabArgs {
  std::string mode = "surface", strategy = "shifted", kind = "shifted", waveform = "sinusoidal", out;
  int n_t = 2, grid = 11, shifts = 21;
  double t_s = -1.0, u = 1.0, omega_tilde = 1.0, freq_mhz = 30.0, exposure = 1.5e-3;
};

int run_modlab(const ModlabArgs& a) {
  std::ofstream file;
  std::ostream& os = open_out(a.out, file);
  os << std::setprecision(17);
  const double T = a.exposure;
  Waveform wave;
  wave.kind = waveform_kind_from_string(a.waveform);
  if (a.mode == "surface") {
    auto w = linspace(0.0, 1.0, a.grid);
    auto th = linspace(0.0, kTwoPi, a.grid, false);
    SamplerKind k = sampler_kind_from_string(a.strategy);
    VarianceSurface s = sampler_variance_surface(T, k, a.n_t, w, th, wave, a.t_s < 0 ? -1.0 : a.t_s * T);
    write_variance_csv_header(os);
    write_variance_csv(os, s);
  } else if (a.mode == "shift-sweep") {
    AntitheticKind k = a.kind == "mirrored" ? AntitheticKind::mirrored : AntitheticKind::shifted;
    auto rows = shift_sweep(T, k, linspace(0.0, 1.0, a.grid), linspace(0.0, kTwoPi, a.grid, false),
                            linspace(0.0, T, a.shifts), wave);
    os << "omega_tilde,theta_prime,t_s_over_T,variance\n";
    for (const auto& r : rows) os << r.omega_tilde << "," << r.theta_prime << "," << r.t_s / T << "," << r.variance << "\n";
  } else if (a.mode == "taylor") {
    ModulationConfig c;
    c.omega_g = kTwoPi * a.freq_mhz * 1e6;
    c.T = T;
    c.set_omega_tilde(a.omega_tilde);
    os << "l,quadrature,order0,order1,order2,err0,err1,err2\n";
    for (double l : linspace(0.5, 10.0, a.grid)) {
      SingleBounce sb{l, a.u, 1.0};
      double q = single_bounce_quadrature(sb, c);
      double o[3];
      for (int k = 0; k < 3; ++k) o[k] = taylor_forward_model(k, sb, c);
      os << l << "," << q << "," << o[0] << "," << o[1] << "," << o[2] << "," << o[0] - q << "," << o[1] - q << ","
         << o[2] - q << "\n";
    }
  } else if (a.mode == "ratio-curve") {
    const double wd = kHuOmegaTilde * kTwoPi / T;
    os << "delta_f_hz,delta_omega,heide_r,hu_r2\n";
    for (double df : linspace(-10.0, 10.0, a.grid)) {
      double dw = kTwoPi * df;
      os << df << "," << dw << "," << heide_ratio_model(dw, T) << "," << hu_ratio_model(dw, wd, T) << "\n";
    }
  } else {
    throw Error("unknown modlab mode '" + a.mode + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doppler time-of-flight Monte Carlo renderer and analysis tools"};
  app.require_subcommand(1);

  RenderArgs ra;
  auto* render_cmd = app.add_subcommand("render", "Render D-ToF, intensity and variance buffers");
  add_render_options(render_cmd, ra);

  std::string exp_path, sweep_out;
  int sweep_workers = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment sweep against high-budget references");
  sweep_cmd->add_option("--experiment", exp_path, "Experiment file (JSON)")->required();
  sweep_cmd->add_option("-o,--out", sweep_out, "Output directory (overrides the file)");
  sweep_cmd->add_option("--workers", sweep_workers, "Worker threads");

  std::string m_buf, m_ref;
  auto* metrics_cmd = app.add_subcommand("metrics", "RMSE, PSNR and MAE of a buffer against a reference");
  metrics_cmd->add_option("buffer", m_buf, "Buffer (PFM)")->required();
  metrics_cmd->add_option("reference", m_ref, "Reference (PFM)")->required();

  std::string v_method = "heide", v_out = "velocity", v_gt;
  std::vector<std::string> v_het, v_hom;
  auto* vel_cmd = app.add_subcommand("velocity", "Reconstruct radial velocity from rendered buffers");
  vel_cmd->add_option("--method", v_method, "heide | heide-mixed | hu");
  vel_cmd->add_option("--het", v_het, "Heterodyne buffer(s), each with a metadata sidecar")->required();
  vel_cmd->add_option("--hom", v_hom, "Homodyne buffer(s), each with a metadata sidecar")->required();
  vel_cmd->add_option("-o,--out", v_out, "Output directory");
  vel_cmd->add_option("--ground-truth-scene", v_gt, "Scene for the depth-difference ground-truth map");

  ModlabArgs ma;
  auto* modlab_cmd = app.add_subcommand("modlab", "1D modulation and variance analysis");
  modlab_cmd->add_option("--mode", ma.mode, "surface | shift-sweep | taylor | ratio-curve");
  modlab_cmd->add_option("--strategy", ma.strategy, "surface: uniform | stratified | shifted | mirrored");
  modlab_cmd->add_option("--kind", ma.kind, "shift-sweep: shifted | mirrored");
  modlab_cmd->add_option("--waveform", ma.waveform, "sinusoidal | rectangular | triangular | trapezoidal");
  modlab_cmd->add_option("--n-t", ma.n_t, "Samples per group");
  modlab_cmd->add_option("--grid", ma.grid, "Grid points per axis");
  modlab_cmd->add_option("--shifts", ma.shifts, "shift-sweep: number of t_s values over [0, T]");
  modlab_cmd->add_option("--t-s", ma.t_s, "Shift as a fraction of T");
  modlab_cmd->add_option("--u", ma.u, "taylor: radial speed (m/s)");
  modlab_cmd->add_option("--omega-tilde", ma.omega_tilde, "taylor: normalized heterodyne frequency");
  modlab_cmd->add_option("--freq-mhz", ma.freq_mhz, "taylor: modulation frequency (MHz)");
  modlab_cmd->add_option("--exposure", ma.exposure, "Exposure T (s)");
  modlab_cmd->add_option("-o,--out", ma.out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*render_cmd) return run_render(ra);
    if (*sweep_cmd) return run_sweep_cmd(exp_path, sweep_out, sweep_workers);
    if (*metrics_cmd) return run_metrics_cmd(m_buf, m_ref);
    if (*vel_cmd) return run_velocity_cmd(v_method, v_het, v_hom, v_out, v_gt);
    if (*modlab_cmd) return run_modlab(ma);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
