// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>

#include "dtof/core.hpp"

namespace dtof {

// ∫₀ᵀ tⁿ e^{iωt} dt, by power series for |ω|T < 1 and the integration-by-parts
// recurrence otherwise.
inline std::complex<double> integrate_tn_exp(int n, double omega, double T) {
  using C = std::complex<double>;
  const double x = omega * T;
  if (std::abs(x) < 1.0) {
    // Σ_m (iωT)^m / (m! (n+m+1)) · T^{n+1}
    C term = 1.0, sum = 0.0;
    for (int m = 0; m < 40; ++m) {
      C add = term / double(n + m + 1);
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
      term *= C(0.0, x) / double(m + 1);
    }
    return sum * std::pow(T, n + 1);
  }
  const C e = std::exp(C(0.0, x));
  const C inv_iw = 1.0 / C(0.0, omega);
  C j = (e - 1.0) * inv_iw;
  double tk = 1.0;
  for (int k = 1; k <= n; ++k) {
    tk *= T;
    j = (tk * e - double(k) * j) * inv_iw;
  }
  return j;
}

// ∫₀ᵀ tⁿ cos(ωt + θ) dt
inline double integrate_tn_cos(int n, double omega, double theta, double T) {
  return (std::exp(std::complex<double>(0.0, theta)) * integrate_tn_exp(n, omega, T)).real();
}

// ∫₀ᵀ (a + b t) cos(ωt + θ) dt
inline double integrate_linear_cos(double a, double b, double omega, double theta, double T) {
  return a * integrate_tn_cos(0, omega, theta, T) + b * integrate_tn_cos(1, omega, theta, T);
}

}  // namespace dtof
