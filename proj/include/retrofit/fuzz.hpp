#pragma once

// Seeded random instances for invariant checks: subsystems, admissible
// environments, environment models (stable or not) and verified modules.
// Sampling is portable: the same seed yields the same instances everywhere.

#include <cstdint>
#include <optional>
#include <random>

#include "retrofit/retrofit.hpp"

namespace retrofit::fuzz {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  /// Uniform integer in [lo, hi].
  Index integer(Index lo, Index hi) {
    return lo + static_cast<Index>(unit() * static_cast<double>(hi - lo + 1));
  }
  /// Standard normal by Box-Muller.
  double normal();
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

MatrixXd random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0);

/// Random square matrix shifted so its spectral abscissa equals `abscissa`.
MatrixXd random_with_abscissa(Rng& rng, Index n, double abscissa);

/// Random strictly proper subsystem with a stable A.
PartitionedPlant random_plant(Rng& rng);

/// Random environment admissible for g (rejection sampling with shrinking
/// gain). Stable dynamics of order 1 to 4.
EnvironmentModel random_admissible_environment(Rng& rng, const PartitionedPlant& g);

/// Random environment model; unstable ones have spectral abscissa in
/// [0.1, 1].
EnvironmentModel random_model(Rng& rng, const PartitionedPlant& g, bool unstable);

/// H-infinity module for the new subsystem of g with apx (alpha = 0.2).
ModuleController design_random_module(const PartitionedPlant& g, const EnvironmentModel& apx);

/// A full random configuration with a verified module. Models whose design
/// fails are resampled; unstable models alternate with stable ones.
struct Instance {
  PartitionedPlant g;
  EnvironmentModel env;
  EnvironmentModel apx;
  ModuleController module;
};

Instance random_instance(Rng& rng, bool unstable_model);

}  // namespace retrofit::fuzz
