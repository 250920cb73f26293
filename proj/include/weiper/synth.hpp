#ifndef WEIPER_SYNTH_HPP_
#define WEIPER_SYNTH_HPP_

#include <cstddef>
#include <cstdint>

#include "weiper/tensor.hpp"

namespace weiper {

// Synthetic benchmark: C orthonormal class directions u_j serve as the
// classifier rows. ID class-j samples sit at class_sep * u_j plus isotropic
// noise. OOD samples are t * (u_j + cone_spread * g) with g a standard
// Gaussian orthogonal to u_j, so OOD mass starts near the origin and widens
// into a cone that reaches toward the class clusters.
struct SynthConfig {
  std::size_t features = 512;  // K
  std::size_t classes = 10;    // C
  std::size_t n_per_class = 100;
  std::size_t n_ood = 1000;
  double class_sep = 6.0;
  double cone_spread = 0.5;
  double noise_sigma = 1.0;
  // t is uniform in (0, reach * class_sep) for the near and far OOD sets.
  double near_reach = 1.0;
  double far_reach = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// id_train, id_val and id_test each hold C * n_per_class rows (class-major);
// OOD sets are "cone" (near) and "origin" (far) with n_ood rows each.
Benchmark generate(const SynthConfig& cfg, std::size_t threads = 0);

}  // namespace weiper

#endif  // WEIPER_SYNTH_HPP_
