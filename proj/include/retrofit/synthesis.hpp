#pragma once

// Module controller design: two-Riccati H-infinity output feedback on a
// design plant, and verified static gains.

#include <optional>
#include <string>

#include "retrofit/plant.hpp"

namespace retrofit::synthesis {

/// Closed loops count as stable when their spectral abscissa is below
/// -kStabilityMargin.
inline constexpr double kStabilityMargin = 1e-9;

/// Controller from the stacked measurement (y, w) to u: either static gains
/// u = Ky y + Kw w or a dynamic system.
class ModuleController {
 public:
  enum class Kind { Static, Dynamic };

  static ModuleController static_gains(const MatrixXd& ky, const MatrixXd& kw);
  static ModuleController dynamic(StateSpace sys, Index ny, Index nw);

  Kind kind() const { return kind_; }
  /// Realization mapping (y, w) -> u; a pure gain in the static case.
  const StateSpace& system() const { return sys_; }
  /// Feedthrough blocks acting on y and w; the gains in the static case.
  MatrixXd ky() const { return sys_.D().leftCols(ny_); }
  MatrixXd kw() const { return sys_.D().rightCols(nw_); }
  Index ny() const { return ny_; }
  Index nw() const { return nw_; }
  Index nu() const { return sys_.outputs(); }
  Index states() const { return sys_.states(); }

 private:
  ModuleController(Kind kind, StateSpace sys, Index ny, Index nw)
      : kind_(kind), sys_(std::move(sys)), ny_(ny), nw_(nw) {}

  Kind kind_;
  StateSpace sys_;
  Index ny_;
  Index nw_;
};

/// Generalized plant for J = sup ||(z, alpha u)|| / ||d||.
///
/// Inputs: d, n (measurement noise, epsilon-scaled, absent if epsilon = 0), u.
/// Outputs: perf = (z, alpha u), xreg = epsilon x (absent if epsilon = 0),
/// meas = (y, w) with noise epsilon n added.
struct GeneralizedPlant {
  StateSpace sys;
  ChannelMap channels;
  double alpha = 0;
  double epsilon = 0;
  Index ny = 0;
  Index nw = 0;
};

GeneralizedPlant build_generalized_plant(const PartitionedPlant& design_plant,
                                         double alpha, double epsilon);

struct SynthesisResult {
  ModuleController controller;
  /// Performance level at which the central controller was formed.
  double gamma;
};

/// Central H-infinity controller at the bisection-optimal level.
/// Throws SynthesisInfeasibleError if no level up to 1e8 is feasible.
SynthesisResult hinf_synthesize(const GeneralizedPlant& gp, double gamma_tol = 1e-3);

/// Positive-feedback closed loop of the design plant's (y, w) <- u channel
/// with the module; state = (plant state, module state).
StateSpace module_loop(const PartitionedPlant& design_plant,
                       const ModuleController& module);

/// Spectral abscissa of module_loop.
double module_loop_abscissa(const PartitionedPlant& design_plant,
                            const ModuleController& module);

/// Wraps static gains after checking that they stabilize the design plant.
/// Throws UnverifiedModuleError naming the abscissa otherwise.
ModuleController static_gains(const MatrixXd& ky, const MatrixXd& kw,
                              const PartitionedPlant& design_plant);

/// Full-information LQR gain projected onto the measured rows (C; Gamma)
/// by least squares. Not guaranteed to stabilize; returns the raw gains.
std::pair<MatrixXd, MatrixXd> lqr_projection_gains(const PartitionedPlant& design_plant,
                                                   double alpha);

}  // namespace retrofit::synthesis
