// Recovers the radial speed of a plane receding at 5 m/s from one heterodyne
// and one homodyne render, then writes the velocity map.
#include <cstdio>

#include "dtof/dtof.hpp"

using namespace dtof;

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("receding_plane_velocity");
  Scene scene = load_scene(fs::path(DTOF_SOURCE_DIR) / "scenes" / "receding_plane.json");

  auto measure = [&](double omega_tilde) {
    IntegratorConfig c;
    c.modulation.T = scene.exposure;
    c.modulation.set_omega_tilde(omega_tilde);
    c.strategy = TimeStrategy::shifted;
    c.mapping = MappingKind::replay;
    c.spp = 256;
    return Measurement{c.modulation, render(scene, c).dtof};
  };
  VelocityMap vm = estimate_velocity_heide(measure(1.0), measure(0.0));
  VelocityGroundTruth gt = ground_truth_velocity_map(scene);

  double est = 0.0, truth = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < vm.speed.size(); ++i)
    if (vm.valid[i] && gt.valid[i]) {
      est += vm.speed.data[i];
      truth += gt.speed.data[i];
      ++n;
    }
  std::printf("valid pixels: %zu of %zu\n", n, vm.speed.size());
  std::printf("mean estimated speed: %.4f m/s\n", est / n);
  std::printf("mean ground truth:    %.4f m/s\n", truth / n);

  fs::create_directories(out);
  write_pfm(out / "velocity.pfm", vm.speed);
  write_pfm(out / "ground_truth.pfm", gt.speed);
  std::printf("wrote %s\n", out.string().c_str());
}
