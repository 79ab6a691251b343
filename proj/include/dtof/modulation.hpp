// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "dtof/core.hpp"
#include "dtof/quadrature.hpp"

namespace dtof {

enum class WaveformKind { sinusoidal, rectangular, triangular, trapezoidal };

inline std::string_view to_string(WaveformKind k) {
  switch (k) {
    case WaveformKind::sinusoidal: return "sinusoidal";
    case WaveformKind::rectangular: return "rectangular";
    case WaveformKind::triangular: return "triangular";
    case WaveformKind::trapezoidal: return "trapezoidal";
  }
  return "?";
}

inline WaveformKind waveform_kind_from_string(std::string_view s) {
  if (s == "sinusoidal" || s == "sin") return WaveformKind::sinusoidal;
  if (s == "rectangular" || s == "rect" || s == "square") return WaveformKind::rectangular;
  if (s == "triangular" || s == "tri") return WaveformKind::triangular;
  if (s == "trapezoidal" || s == "trap") return WaveformKind::trapezoidal;
  throw Error("unknown waveform '" + std::string(s) + "'");
}

// Zero-mean, 2π-periodic, cosine-aligned (maximum at phase 0).
struct Waveform {
  WaveformKind kind = WaveformKind::sinusoidal;
  double duty = 0.5;  // rectangular: high fraction of the period
  double rise = 0.25; // trapezoidal: each ramp's fraction of the period

  double operator()(double phase) const {
    const double cycles = phase * (0.5 * kInvPi);
    switch (kind) {
      case WaveformKind::sinusoidal:
        return std::cos(phase);
      case WaveformKind::rectangular: {
        double f = cycles + 0.5 * duty;
        f -= std::floor(f);
        return 2.0 * ((f < duty ? 1.0 : 0.0) - duty);
      }
      case WaveformKind::triangular: {
        double u = cycles + 0.5;
        u = u - std::floor(u) - 0.5;
        return 1.0 - 4.0 * std::abs(u);
      }
      case WaveformKind::trapezoidal: {
        double u = cycles + 0.5;
        u = std::abs(u - std::floor(u) - 0.5);
        const double p = (1.0 - 2.0 * rise) / 4.0;
        if (u < p) return 1.0;
        if (u > 0.5 - p) return -1.0;
        return 1.0 - 2.0 * (u - p) / rise;
      }
    }
    return 0.0;
  }

  bool is_sinusoid() const { return kind == WaveformKind::sinusoidal; }

  // Phases, in cycles within [0, 1), where the waveform is not smooth.
  std::vector<double> kinks() const {
    auto frac = [](double c) { return c - std::floor(c); };
    switch (kind) {
      case WaveformKind::sinusoidal: return {};
      case WaveformKind::rectangular: return {frac(-0.5 * duty), frac(0.5 * duty)};
      case WaveformKind::triangular: return {0.0, 0.5};
      case WaveformKind::trapezoidal: {
        const double p = (1.0 - 2.0 * rise) / 4.0;
        return {frac(p), frac(-p), frac(0.5 - p), frac(p - 0.5)};
      }
    }
    return {};
  }

  void validate() const {
    if (kind == WaveformKind::rectangular && !(duty > 0.0 && duty < 1.0))
      throw Error("rectangular duty must lie in (0, 1)");
    if (kind == WaveformKind::trapezoidal && !(rise > 0.0 && rise <= 0.5))
      throw Error("trapezoidal rise must lie in (0, 0.5]");
  }

  friend bool operator==(const Waveform&, const Waveform&) = default;
};

struct ModulationConfig {
  double omega_g = kTwoPi * 30e6;
  double omega_d = 0.0;
  double psi = 0.0;
  double T = 1.5e-3;
  double g0 = 0.0;
  double g1 = 1.0;
  Waveform sensor_waveform{};
  Waveform illum_waveform{};
  bool low_pass = true;

  double omega_f() const { return omega_g + omega_d; }
  double omega_tilde() const { return omega_d * T / kTwoPi; }
  void set_omega_tilde(double w) { omega_d = w * kTwoPi / T; }

  // Throws on hard violations; returns soft warnings.
  std::vector<std::string> validate() const {
    if (!(T > 0.0)) throw Error("exposure T must be positive");
    if (omega_d < 0.0 || omega_d > kTwoPi / T * (1.0 + 1e-12))
      throw Error("omega_d must lie in [0, 2*pi/T]");
    sensor_waveform.validate();
    illum_waveform.validate();
    std::vector<std::string> warnings;
    if (omega_g < 1e3 * kTwoPi / T)
      warnings.push_back("omega_g is not much larger than 2*pi/T; low-pass filtering is inaccurate");
    return warnings;
  }
};

struct PathPhase {
  double tau = 0.0;
  double phi(double omega_g) const { return -omega_g * tau; }
};

inline constexpr int kCorrelationBins = 4096;

// X(d) = (1/2π) ∫ s(a + d) w(a) da sampled on kCorrelationBins + 1 points over [0, 2π].
inline std::vector<double> build_correlation_table(const Waveform& sensor, const Waveform& illum) {
  const int n = kCorrelationBins;
  std::vector<double> s(n), w(n), table(n + 1);
  for (int k = 0; k < n; ++k) {
    double a = (k + 0.5) * kTwoPi / n;
    s[k] = sensor(a);
    w[k] = illum(a);
  }
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += s[(k + j) % n] * w[k];
    table[j] = acc / n;
  }
  table[n] = table[0];
  return table;
}

inline std::shared_ptr<const std::vector<double>> correlation_table(const Waveform& sensor, const Waveform& illum) {
  using Key = std::tuple<int, double, double, int, double, double>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const std::vector<double>>> cache;
  Key key{static_cast<int>(sensor.kind), sensor.duty, sensor.rise,
          static_cast<int>(illum.kind), illum.duty, illum.rise};
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto table = std::make_shared<const std::vector<double>>(build_correlation_table(sensor, illum));
  cache.emplace(key, table);
  return table;
}

// Evaluates the modulation of a path contribution at sensor time t.
class Modulator {
 public:
  Modulator() : Modulator(ModulationConfig{}) {}
  explicit Modulator(const ModulationConfig& c) : cfg_(c) {
    sinusoid_ = c.sensor_waveform.is_sinusoid() && c.illum_waveform.is_sinusoid();
    if (!sinusoid_ && c.low_pass) table_ = correlation_table(c.sensor_waveform, c.illum_waveform);
  }

  const ModulationConfig& config() const { return cfg_; }
  bool sinusoidal() const { return sinusoid_; }

  // Low-pass term at heterodyne phase d = ω_d t − φ + ψ.
  double low_pass_at_phase(double d) const {
    if (sinusoid_) return 0.5 * cfg_.g1 * std::cos(d);
    double u = d * (0.5 * kInvPi);
    u -= std::floor(u);
    double x = u * kCorrelationBins;
    int i = std::min(static_cast<int>(x), kCorrelationBins - 1);
    double f = x - i;
    const auto& tb = *table_;
    return cfg_.g1 * (tb[i] + f * (tb[i + 1] - tb[i]));
  }

  double low_pass(double t, double tau) const {
    return low_pass_at_phase(cfg_.omega_d * t + cfg_.omega_g * tau + cfg_.psi);
  }

  double full_product(double t, double tau) const {
    const double sensor = cfg_.sensor_waveform(cfg_.omega_f() * t + cfg_.psi);
    const double illum = cfg_.illum_waveform(cfg_.omega_g * (t - tau));
    return sensor * (cfg_.g1 * illum + cfg_.g0);
  }

  // Same as full_product with every intermediate rounded to single precision.
  double full_product_f32(float t, float tau) const {
    float wf = static_cast<float>(cfg_.omega_f());
    float wg = static_cast<float>(cfg_.omega_g);
    float ps = static_cast<float>(cfg_.psi);
    float dt = t - tau;
    float sensor = static_cast<float>(cfg_.sensor_waveform(static_cast<float>(wf * t + ps)));
    float illum = static_cast<float>(cfg_.illum_waveform(static_cast<float>(wg * dt)));
    return sensor * (static_cast<float>(cfg_.g1) * illum + static_cast<float>(cfg_.g0));
  }

  double low_pass_f32(float t, float tau) const {
    float wd = static_cast<float>(cfg_.omega_d);
    float wg = static_cast<float>(cfg_.omega_g);
    float d = wd * t + wg * tau + static_cast<float>(cfg_.psi);
    return static_cast<float>(low_pass_at_phase(d));
  }

  double operator()(double t, double tau) const { return cfg_.low_pass ? low_pass(t, tau) : full_product(t, tau); }

 private:
  ModulationConfig cfg_;
  bool sinusoid_ = true;
  std::shared_ptr<const std::vector<double>> table_;
};

inline double eval_modulation_term(const ModulationConfig& c, double t, double tau) {
  return Modulator(c).low_pass(t, tau);
}

inline double eval_full_product(const ModulationConfig& c, double t, double tau) {
  return Modulator(c).full_product(t, tau);
}

// ---------------------------------------------------------------------------
// 1D variance lab. Integrals follow the convention Var = ∫₀ᵀ (...)² dt, i.e.
// without a 1/T normalisation.

using Signal = std::function<double(double)>;

// Times in [0, T) at which wave(ω_d t + θ) is not smooth.
inline std::vector<double> waveform_kink_times(const Waveform& wave, double omega_d, double theta, double T) {
  std::vector<double> out;
  if (omega_d <= 0.0) return out;
  const double period = kTwoPi / omega_d;
  for (double k : wave.kinks()) {
    double t0 = (k * kTwoPi - theta) / omega_d;
    t0 -= period * std::floor(t0 / period);
    for (double t = t0; t < T; t += period) out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Endpoint offset for pieces bounded by waveform kinks, which may be jumps.
inline double kink_nudge(const std::vector<double>& kinks) { return kinks.empty() ? 0.0 : 1e-13; }

inline double signal_mean(const Signal& x, double T, const std::vector<double>& kinks = {}) {
  return simpson_pieces(x, 0.0, T, kinks, kSimpsonPanels, kink_nudge(kinks)) / T;
}

inline double autocorrelation(const Signal& x, double T, double t_s) {
  auto f = [&](double t, double m) { return x(t) * x(wrap_like(t + t_s, m + t_s, T)); };
  return simpson_pieces(f, 0.0, T, {T - t_s});
}

inline double autoconvolution(const Signal& x, double T, double t_s) {
  auto f = [&](double t, double m) { return x(t) * x(wrap_like(-t + t_s, -m + t_s, T)); };
  return simpson_pieces(f, 0.0, T, {t_s});
}

// E_θ of the autoconvolution of cos(ω_d t + θ) over θ ~ U[0, 2π).
inline double expected_autoconvolution_sinusoid(double omega_d, double T, double t_s) {
  if (omega_d * T < 1e-6) {
    // sin(ω a)/ω ≈ a − ω² a³/6
    double a = t_s, b = T - t_s, w2 = omega_d * omega_d;
    return 0.5 * (a - w2 * a * a * a / 6.0 + b - w2 * b * b * b / 6.0);
  }
  return (std::sin(omega_d * t_s) + std::sin(omega_d * (T - t_s))) / (2.0 * omega_d);
}

enum class AntitheticKind { shifted, mirrored };

inline double antithetic_partner(AntitheticKind k, double t, double t_s, double T) {
  return k == AntitheticKind::shifted ? wrap_time(t + t_s, T) : wrap_time(-t + t_s, T);
}

// `kinks` lists the times in [0, T) where x is not smooth; they become quadrature breakpoints.
inline double antithetic_variance(const Signal& x, double T, AntitheticKind k, double t_s,
                                  const std::vector<double>& kinks = {}) {
  const double mu = signal_mean(x, T, kinks);
  const double sign = k == AntitheticKind::shifted ? 1.0 : -1.0;
  auto f = [&](double t, double m) {
    double v = 0.5 * (x(t) + x(wrap_like(sign * t + t_s, sign * m + t_s, T))) - mu;
    return v * v;
  };
  std::vector<double> cuts{k == AntitheticKind::shifted ? T - t_s : t_s};
  for (double c : kinks) {
    cuts.push_back(c);
    cuts.push_back(wrap_time(sign * (c - t_s), T));
  }
  return simpson_pieces(f, 0.0, T, cuts, kSimpsonPanels, kink_nudge(kinks));
}

inline double analytic_F_sinusoid(double omega_d, double theta, double T, double t_s) {
  if (omega_d * T < 1e-6) {
    // ω → 0: sin(ω t_s)/(2ω) → t_s/2
    return 0.5 * t_s * std::cos(2.0 * theta) + 0.5 * t_s;
  }
  return std::cos(omega_d * T + 2.0 * theta) * std::sin(omega_d * t_s) / (2.0 * omega_d) +
         0.5 * t_s * std::cos(omega_d * (T - t_s));
}

inline double analytic_autocorrelation_sinusoid(double omega_d, double theta, double T, double t_s) {
  return analytic_F_sinusoid(omega_d, theta, T, t_s) + analytic_F_sinusoid(omega_d, theta, T, T - t_s);
}

enum class SamplerKind { uniform, stratified, shifted, mirrored };

inline std::string_view to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::stratified: return "stratified";
    case SamplerKind::shifted: return "shifted";
    case SamplerKind::mirrored: return "mirrored";
  }
  return "?";
}

inline SamplerKind sampler_kind_from_string(std::string_view s) {
  if (s == "uniform") return SamplerKind::uniform;
  if (s == "stratified") return SamplerKind::stratified;
  if (s == "shifted") return SamplerKind::shifted;
  if (s == "mirrored") return SamplerKind::mirrored;
  throw Error("unknown sampler '" + std::string(s) + "'");
}

inline double default_shift(SamplerKind k, double T) { return k == SamplerKind::shifted ? 0.5 * T : 0.0; }

// Exact variance (by quadrature) of the N_t-sample estimator of ∫x for the given sampler.
inline double sampler_variance(const Signal& x, double T, SamplerKind k, int n_t, double t_s,
                               const std::vector<double>& kinks = {}) {
  if (n_t < 1) throw Error("N_t must be positive");
  const double mu = signal_mean(x, T, kinks);
  switch (k) {
    case SamplerKind::uniform: {
      auto sq = [&](double t) { double d = x(t) - mu; return d * d; };
      double v = simpson_pieces(sq, 0.0, T, kinks, kSimpsonPanels, kink_nudge(kinks));
      return v / n_t;
    }
    case SamplerKind::stratified: {
      const double w = T / n_t;
      double acc = 0.0;
      for (int s = 0; s < n_t; ++s) {
        double a = s * w, b = a + w;
        int panels = std::max(64, kSimpsonPanels / n_t);
        double m = simpson_pieces(x, a, b, kinks, panels, kink_nudge(kinks)) / w;
        auto sq = [&](double t) { double d = x(t) - m; return d * d; };
        double v = simpson_pieces(sq, a, b, kinks, panels, kink_nudge(kinks)) / w;
        acc += v;
      }
      return T * acc / (double(n_t) * n_t);
    }
    case SamplerKind::shifted: {
      if (n_t == 2) return antithetic_variance(x, T, AntitheticKind::shifted, t_s, kinks);
      auto f = [&](double t, double m) {
        double s = 0.0;
        for (int j = 0; j < n_t; ++j) s += x(wrap_like(t + j * T / n_t, m + j * T / n_t, T));
        double d = s / n_t - mu;
        return d * d;
      };
      std::vector<double> cuts;
      for (int j = 1; j < n_t; ++j) cuts.push_back(T - j * T / n_t);
      for (double c : kinks)
        for (int j = 0; j < n_t; ++j) cuts.push_back(wrap_time(c - j * T / n_t, T));
      return simpson_pieces(f, 0.0, T, cuts, kSimpsonPanels, kink_nudge(kinks));
    }
    case SamplerKind::mirrored:
      if (n_t != 2) throw Error("mirrored sampling is only defined for N_t = 2");
      return antithetic_variance(x, T, AntitheticKind::mirrored, t_s, kinks);
  }
  return 0.0;
}

struct VarianceSurface {
  SamplerKind strategy = SamplerKind::uniform;
  int n_t = 2;
  double t_s = 0.0;
  std::vector<double> omega_tilde;
  std::vector<double> theta_prime;
  std::vector<std::vector<double>> variance;  // [omega_tilde][theta_prime]

  double theta_average(size_t i) const {
    double s = 0.0;
    for (double v : variance[i]) s += v;
    return s / variance[i].size();
  }
};

inline std::vector<double> linspace(double a, double b, int n, bool endpoint = true) {
  std::vector<double> v(n);
  double step = (n > 1) ? (b - a) / (endpoint ? n - 1 : n) : 0.0;
  for (int i = 0; i < n; ++i) v[i] = a + step * i;
  return v;
}

// Grid of variances over (ω̃, θ′) for the integrand waveform(ω_d t + θ), with
// θ′ = θ + 0.5 ω_d T.
inline VarianceSurface sampler_variance_surface(double T, SamplerKind strategy, int n_t,
                                                const std::vector<double>& omega_tilde,
                                                const std::vector<double>& theta_prime,
                                                const Waveform& wave = {}, double t_s = -1.0) {
  if (strategy == SamplerKind::mirrored && n_t != 2)
    throw Error("mirrored sampling requires N_t = 2");
  VarianceSurface s;
  s.strategy = strategy;
  s.n_t = n_t;
  s.t_s = t_s < 0 ? default_shift(strategy, T) : t_s;
  if (s.t_s > T) throw Error("t_s must lie in [0, T]");
  s.omega_tilde = omega_tilde;
  s.theta_prime = theta_prime;
  for (double wt : omega_tilde) {
    double wd = wt * kTwoPi / T;
    std::vector<double> row;
    for (double tp : theta_prime) {
      double theta = tp - 0.5 * wd * T;
      Signal x = [&wave, wd, theta](double t) { return wave(wd * t + theta); };
      row.push_back(sampler_variance(x, T, strategy, n_t, s.t_s, waveform_kink_times(wave, wd, theta, T)));
    }
    s.variance.push_back(std::move(row));
  }
  return s;
}

inline void write_variance_csv_header(std::ostream& os) { os << "omega_tilde,theta_prime,strategy,t_s,variance\n"; }

inline void write_variance_csv(std::ostream& os, const VarianceSurface& s) {
  for (size_t i = 0; i < s.omega_tilde.size(); ++i)
    for (size_t j = 0; j < s.theta_prime.size(); ++j)
      os << s.omega_tilde[i] << ',' << s.theta_prime[j] << ',' << to_string(s.strategy) << ',' << s.t_s << ','
         << s.variance[i][j] << '\n';
}

struct ShiftSweepRow {
  double omega_tilde, theta_prime, t_s, variance;
};

// Antithetic variance as a function of t_s for each (ω̃, θ′).
inline std::vector<ShiftSweepRow> shift_sweep(double T, AntitheticKind kind, const std::vector<double>& omega_tilde,
                                              const std::vector<double>& theta_prime, const std::vector<double>& shifts,
                                              const Waveform& wave = {}) {
  std::vector<ShiftSweepRow> rows;
  for (double wt : omega_tilde) {
    double wd = wt * kTwoPi / T;
    for (double tp : theta_prime) {
      double theta = tp - 0.5 * wd * T;
      Signal x = [&wave, wd, theta](double t) { return wave(wd * t + theta); };
      auto kinks = waveform_kink_times(wave, wd, theta, T);
      for (double ts : shifts) rows.push_back({wt, tp, ts, antithetic_variance(x, T, kind, ts, kinks)});
    }
  }
  return rows;
}

}  // namespace dtof
