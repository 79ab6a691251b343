// Prints theta-averaged variance of each time sampler against omega~ for a
// sinusoidal integrand with two time samples, as CSV.
#include <cstdio>

#include "dtof/dtof.hpp"

using namespace dtof;

int main() {
  const double T = 1.5e-3;
  const auto wts = linspace(0.0, 1.0, 11);
  const auto thetas = linspace(0.0, kTwoPi, 16, false);
  const SamplerKind kinds[] = {SamplerKind::uniform, SamplerKind::stratified, SamplerKind::shifted,
                               SamplerKind::mirrored};
  std::vector<VarianceSurface> surfaces;
  for (auto k : kinds) surfaces.push_back(sampler_variance_surface(T, k, 2, wts, thetas));

  std::printf("omega_tilde");
  for (auto k : kinds) std::printf(",%s", std::string(to_string(k)).c_str());
  std::printf("\n");
  for (size_t i = 0; i < wts.size(); ++i) {
    std::printf("%.1f", wts[i]);
    for (const auto& s : surfaces) std::printf(",%.6e", s.theta_average(i) / T);
    std::printf("\n");
  }
}
