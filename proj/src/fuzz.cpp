#include "retrofit/fuzz.hpp"

#include <cmath>

#include "retrofit/errors.hpp"

namespace retrofit::fuzz {

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = unit();
  while (u1 <= 0) u1 = unit();
  const double u2 = unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(t);
  return r * std::cos(t);
}

MatrixXd random_matrix(Rng& rng, Index rows, Index cols, double scale) {
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

MatrixXd random_with_abscissa(Rng& rng, Index n, double abscissa) {
  MatrixXd a = random_matrix(rng, n, n, 1.0 / std::sqrt(static_cast<double>(n)));
  const double shift = abscissa - numerics::spectral_abscissa(a);
  a.diagonal().array() += shift;
  return a;
}

PartitionedPlant random_plant(Rng& rng) {
  const Index n = rng.integer(3, 6);
  const Index nv = rng.integer(1, 2), nd = rng.integer(1, 2), nu = rng.integer(1, 2);
  const Index nw = nv, nz = rng.integer(1, 2), ny = rng.integer(1, 3);
  const MatrixXd a = random_with_abscissa(rng, n, rng.uniform(-1.0, -0.2));
  return PartitionedPlant::from_blocks(a, random_matrix(rng, n, nv), random_matrix(rng, n, nd),
                                       random_matrix(rng, n, nu), random_matrix(rng, nw, n),
                                       random_matrix(rng, nz, n), random_matrix(rng, ny, n));
}

namespace {

StateSpace random_system(Rng& rng, Index n, Index p, Index m, double abscissa, double gain) {
  return StateSpace(random_with_abscissa(rng, n, abscissa), random_matrix(rng, n, m),
                    random_matrix(rng, p, n, gain), random_matrix(rng, p, m, gain));
}

}  // namespace

EnvironmentModel random_admissible_environment(Rng& rng, const PartitionedPlant& g) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Index n = rng.integer(1, 4);
    const StateSpace s = random_system(rng, n, g.nv(), g.nw(), rng.uniform(-2.0, -0.2), 1.0);
    // Shrink the output gain until the interconnection is stable.
    for (double scale = 1.0; scale > 1e-3; scale *= 0.5) {
      EnvironmentModel env(StateSpace(s.A(), s.B(), scale * s.C(), scale * s.D()));
      if (check_admissible(g, env)) return env;
    }
  }
  throw NumericalError("random_admissible_environment: no admissible sample found");
}

EnvironmentModel random_model(Rng& rng, const PartitionedPlant& g, bool unstable) {
  const Index n = rng.integer(1, 3);
  const double abscissa = unstable ? rng.uniform(0.1, 1.0) : rng.uniform(-2.0, -0.2);
  return EnvironmentModel(random_system(rng, n, g.nv(), g.nw(), abscissa, 1.0));
}

ModuleController design_random_module(const PartitionedPlant& g, const EnvironmentModel& apx) {
  const PartitionedPlant gplus = new_subsystem(g, apx);
  return synthesis::hinf_synthesize(synthesis::build_generalized_plant(gplus, 0.2, 1e-4), 1e-3)
      .controller;
}

Instance random_instance(Rng& rng, bool unstable_model) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    PartitionedPlant g = random_plant(rng);
    EnvironmentModel env = random_admissible_environment(rng, g);
    for (int m = 0; m < 5; ++m) {
      EnvironmentModel apx = random_model(rng, g, unstable_model);
      try {
        ModuleController k = design_random_module(g, apx);
        return Instance{std::move(g), std::move(env), std::move(apx), std::move(k)};
      } catch (const Error&) {
      }
    }
  }
  throw NumericalError("random_instance: module design failed on every sample");
}

}  // namespace retrofit::fuzz
