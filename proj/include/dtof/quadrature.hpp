// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <initializer_list>
#include <type_traits>
#include <vector>

#include "dtof/core.hpp"

namespace dtof {

inline constexpr int kSimpsonPanels = 1 << 14;

// Composite Simpson rule; `panels` is rounded up to an even count.
template <class F>
double simpson(F&& f, double a, double b, int panels = kSimpsonPanels) {
  if (panels < 2) panels = 2;
  if (panels % 2) ++panels;
  if (b == a) return 0.0;
  const double h = (b - a) / panels;
  double odd = 0.0, even = 0.0;
  for (int i = 1; i < panels; ++i) {
    double v = f(a + h * i);
    if (i % 2) odd += v;
    else even += v;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

// Simpson over [a, b] split at interior breakpoints; the panel budget is
// distributed proportionally to piece length. With a nonzero `nudge`, piece
// endpoints are evaluated that fraction of the piece length inside it, so a
// jump at a breakpoint contributes its one-sided limit. An integrand taking
// (t, mid) also receives the midpoint of the current piece.
template <class F>
double simpson_pieces(F&& f, double a, double b, std::vector<double> cuts, int panels = kSimpsonPanels,
                      double nudge = 0.0) {
  std::vector<double> pts{a};
  std::sort(cuts.begin(), cuts.end());
  for (double c : cuts)
    if (c > a && c < b && c > pts.back()) pts.push_back(c);
  pts.push_back(b);
  double sum = 0.0;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    const double lo = pts[i], hi = pts[i + 1], d = nudge * (hi - lo);
    int n = std::max(2, static_cast<int>(panels * (hi - lo) / (b - a)));
    auto inside = [=](double t) { return t == lo ? lo + d : (t == hi ? hi - d : t); };
    if constexpr (std::is_invocable_v<F&, double, double>) {
      const double mid = 0.5 * (lo + hi);
      sum += simpson([&](double t) { return f(inside(t), mid); }, lo, hi, n);
    } else {
      sum += simpson([&](double t) { return f(inside(t)); }, lo, hi, n);
    }
  }
  return sum;
}

}  // namespace dtof
