// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dtof/core.hpp"
#include "dtof/image.hpp"

namespace dtof {

// PSNR reported when the buffer equals the reference.
inline constexpr double kPsnrCap = 999.0;

struct Metrics {
  double rmse = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  double psnr = kPsnrCap;  // peak = max |reference|
  double peak = 0.0;
};

inline Metrics compute_metrics(const Image& buffer, const Image& reference, const std::vector<uint8_t>* mask = nullptr) {
  if (!buffer.same_shape(reference)) throw Error("metrics: resolution mismatch");
  if (mask && mask->size() != buffer.size()) throw Error("metrics: mask size mismatch");
  Metrics m;
  size_t n = 0;
  for (size_t i = 0; i < buffer.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    double d = buffer.data[i] - reference.data[i];
    m.mse += d * d;
    m.mae += std::abs(d);
    m.peak = std::max(m.peak, std::abs(reference.data[i]));
    ++n;
  }
  if (n == 0) throw Error("metrics: no pixels to compare");
  m.mse /= double(n);
  m.mae /= double(n);
  m.rmse = std::sqrt(m.mse);
  if (m.rmse > 0.0 && m.peak > 0.0)
    m.psnr = std::min(kPsnrCap, 20.0 * std::log10(m.peak / m.rmse));
  else if (m.rmse > 0.0)
    m.psnr = -kPsnrCap;
  return m;
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= double(v.size());
  if (v.size() > 1) {
    for (double x : v) r.std += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(r.std / double(v.size() - 1));
  }
  return r;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("loglog_slope: need two or more matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw Error("loglog_slope: values must be positive");
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace dtof
