#pragma once

// Retrofit control with an approximate environment model.
//
// Given the subsystem G, an environment model G_apx and a module controller
// K^ designed for the new subsystem G+ (G closed with G_apx), the retrofit
// controller is K = K^ (XR): the extended output rectifier XR reconstructs
// the environment-free signals (y^, w^) from (y, w, v), then K^ acts on them.

#include <vector>

#include "retrofit/plant.hpp"
#include "retrofit/synthesis.hpp"

namespace retrofit {

using synthesis::ModuleController;

/// Closed loop of G and env over (v, w). Inputs (d, u), outputs (z, y).
StateSpace assemble_preexisting(const PartitionedPlant& g, const EnvironmentModel& env);

/// A-matrix of the G/env interconnection, state (x, env state).
MatrixXd interconnected_a(const PartitionedPlant& g, const EnvironmentModel& env);

/// Spectral abscissa of the G/env interconnection after dropping marginal
/// modes that are unobservable from z.
double admissibility_abscissa(const PartitionedPlant& g, const EnvironmentModel& env);

/// True iff env belongs to the admissible set of G.
bool check_admissible(const PartitionedPlant& g, const EnvironmentModel& env);

/// G+ : G closed with apx over (v, w), keeping v as an external input and all
/// outputs. State (x, apx state).
PartitionedPlant new_subsystem(const PartitionedPlant& g, const EnvironmentModel& apx);

/// Extended output rectifier XR : (y, w, v) -> (y^, w^), state (x^, apx state).
struct Rectifier {
  StateSpace sys;
  /// The new subsystem G+ the module must stabilize.
  PartitionedPlant design_plant;
  Index plant_states = 0;
  Index model_states = 0;
};

Rectifier extended_rectifier(const PartitionedPlant& g, const EnvironmentModel& apx);

/// Same rectifier with the sign of its v columns flipped. Test hook only:
/// the result does not annihilate the environment.
Rectifier corrupt_rectifier_sign(const Rectifier& rect);

/// K = K^ XR : (y, w, v) -> u. Constructed only through compose_retrofit.
class RetrofitController {
 public:
  const Rectifier& rectifier() const { return rect_; }
  const ModuleController& module() const { return module_; }
  /// Realization, state (x^, apx state, module state).
  const StateSpace& realized() const { return realized_; }
  /// Closed-loop abscissa of the module with G+ recorded by the gate.
  double verified_abscissa() const { return abscissa_; }

 private:
  friend RetrofitController compose_retrofit(const ModuleController&, const Rectifier&);
  RetrofitController(Rectifier rect, ModuleController module, StateSpace realized,
                     double abscissa)
      : rect_(std::move(rect)), module_(std::move(module)),
        realized_(std::move(realized)), abscissa_(abscissa) {}

  Rectifier rect_;
  ModuleController module_;
  StateSpace realized_;
  double abscissa_;
};

/// Composes after checking that the module stabilizes the rectifier's design
/// plant. Throws UnverifiedModuleError otherwise.
RetrofitController compose_retrofit(const ModuleController& module, const Rectifier& rect);

/// Same residual for a composed controller, with the module applied to the
/// rectifier output so the rectifier cancellation is not lost to the gain.
double invariance_residual(const PartitionedPlant& g, const RetrofitController& k,
                           const std::vector<double>& grid);

/// d -> z map of G, env and a controller (y, w, v) -> u closed together.
StateSpace closed_loop_direct(const PartitionedPlant& g, const EnvironmentModel& env,
                              const StateSpace& k);

/// d -> z map with u = K^(y, w) applied without any rectifier.
StateSpace closed_loop_unrectified(const PartitionedPlant& g, const EnvironmentModel& env,
                                   const ModuleController& module);

/// Max over `grid` of ||G'_wv(jw) - G_wv(jw)||, where G'_wv is the v -> w map
/// of G with the local loop u = k(y, w, v) closed, evaluated pointwise.
double invariance_residual(const PartitionedPlant& g, const StateSpace& k,
                           const std::vector<double>& grid);

/// Cascade form of the retrofit closed loop.
///
/// upstream:   states (xi^, apx, module), input d, outputs (z^, w^, v_apx)
/// downstream: states (xi_, env), inputs (w^, v_apx), output z_
/// full:       the series connection, input d, outputs (z, z^, z_, w^)
///             with z = z^ + z_.
struct CascadeRealization {
  StateSpace upstream;
  StateSpace downstream;
  StateSpace full;
  ChannelMap taps;

  StateSpace t_zd() const { return tap("z"); }
  StateSpace tap(const std::string& name) const {
    return lti::select_channels(full, taps, {"d"}, {name});
  }
};

CascadeRealization cascade_realization(const PartitionedPlant& g, const EnvironmentModel& env,
                                       const EnvironmentModel& apx,
                                       const ModuleController& module);

struct PerformanceReport {
  double gamma_actual = 0;
  double gamma_hat = 0;
  double gamma_check = 0;
  double lower = 0;
  double upper = 0;
  bool stable = false;
  double abscissa = 0;
  double invariance_residual = 0;
};

/// Norms and bound terms for one design/environment pair. Norms are left at
/// zero when the closed loop is unstable.
PerformanceReport performance_bounds(const PartitionedPlant& g, const EnvironmentModel& env,
                                     const EnvironmentModel& apx,
                                     const ModuleController& module,
                                     double norm_tol = 1e-10, double minreal_tol = 1e-8);

/// Deflated abscissa of a closed loop: marginal modes unobservable from its
/// output `c_eval` are ignored.
double closed_loop_abscissa(const MatrixXd& a, const MatrixXd& c_eval);

/// H-infinity norm after splitting off hidden marginal modes; those modes
/// must have negligible transfer at relative tolerance `hidden_tol`.
double deflated_norm(const StateSpace& sys, double tol = 1e-10, double hidden_tol = 1e-8);

}  // namespace retrofit
