#include "retrofit/synthesis.hpp"

#include <cmath>
#include <sstream>

#include "retrofit/errors.hpp"
#include "retrofit/numerics.hpp"

namespace retrofit::synthesis {

namespace {

constexpr double kGammaCeiling = 1e8;
constexpr double kGammaFloor = 1e-9;

struct CentralController {
  StateSpace k;
  std::string failure;
};

/// Two-Riccati central controller at level gamma, or the reason it fails.
CentralController central_controller(const GeneralizedPlant& gp, double gamma) {
  const StateSpace& s = gp.sys;
  const auto& in_u = gp.channels.input("u");
  const auto& out_meas_y = gp.channels.output("y");
  const Index n = s.states();
  const Index nu = in_u.size;
  const Index nmeas = gp.ny + gp.nw;
  const Index nexo = in_u.offset;
  const Index nperf = out_meas_y.offset;

  const MatrixXd a = s.A();
  const MatrixXd b1 = s.B().leftCols(nexo);
  const MatrixXd b2 = s.B().middleCols(in_u.offset, nu);
  const MatrixXd c1 = s.C().topRows(nperf);
  const MatrixXd c2 = s.C().middleRows(out_meas_y.offset, nmeas);
  const MatrixXd d12 = s.D().block(0, in_u.offset, nperf, nu);
  const MatrixXd d21 = s.D().block(out_meas_y.offset, 0, nmeas, nexo);

  const MatrixXd r1 = d12.transpose() * d12;
  const MatrixXd r2 = d21 * d21.transpose();
  Eigen::LLT<MatrixXd> r1l(r1), r2l(r2);
  if (r1l.info() != Eigen::Success || r2l.info() != Eigen::Success) {
    return {StateSpace(), "control or measurement feedthrough is rank deficient"};
  }
  const double g2 = 1.0 / (gamma * gamma);

  MatrixXd hx(2 * n, 2 * n);
  hx << a, g2 * b1 * b1.transpose() - b2 * r1l.solve(b2.transpose()),
      -c1.transpose() * c1, -a.transpose();
  MatrixXd hy(2 * n, 2 * n);
  hy << a.transpose(), g2 * c1.transpose() * c1 - c2.transpose() * r2l.solve(c2),
      -b1 * b1.transpose(), -a;

  MatrixXd x, y;
  try {
    x = numerics::riccati_from_hamiltonian<double>(hx);
  } catch (const Error& e) {
    return {StateSpace(), std::string("X Riccati: ") + e.what()};
  }
  try {
    y = numerics::riccati_from_hamiltonian<double>(hy);
  } catch (const Error& e) {
    return {StateSpace(), std::string("Y Riccati: ") + e.what()};
  }
  const double scale_x = std::max(1.0, x.norm()), scale_y = std::max(1.0, y.norm());
  if (Eigen::SelfAdjointEigenSolver<MatrixXd>(x).eigenvalues().minCoeff() < -1e-9 * scale_x) {
    return {StateSpace(), "X Riccati solution is not positive semidefinite"};
  }
  if (Eigen::SelfAdjointEigenSolver<MatrixXd>(y).eigenvalues().minCoeff() < -1e-9 * scale_y) {
    return {StateSpace(), "Y Riccati solution is not positive semidefinite"};
  }
  const double rho = numerics::eigenvalues(x * y).cwiseAbs().maxCoeff();
  if (!(rho < gamma * gamma)) {
    std::ostringstream os;
    os << "coupling condition fails: spectral radius of XY " << rho << " >= gamma^2 "
       << gamma * gamma;
    return {StateSpace(), os.str()};
  }

  const MatrixXd f = -r1l.solve(b2.transpose() * x);
  const MatrixXd l = -y * c2.transpose() * r2l.solve(MatrixXd::Identity(nmeas, nmeas));
  const MatrixXd zinv = MatrixXd::Identity(n, n) - g2 * y * x;
  Eigen::PartialPivLU<MatrixXd> zlu(zinv);
  const MatrixXd zl = zlu.solve(l);
  const MatrixXd ak = a + g2 * b1 * b1.transpose() * x + b2 * f + zl * c2;
  const MatrixXd bk = -zl;
  if (!ak.allFinite() || !bk.allFinite() || !f.allFinite()) {
    return {StateSpace(), "central controller is not finite"};
  }
  return {StateSpace(ak, bk, f, MatrixXd::Zero(nu, nmeas)), ""};
}

/// Closed loop from all exogenous inputs to all performance outputs.
StateSpace generalized_loop(const GeneralizedPlant& gp, const StateSpace& k) {
  const auto& in_u = gp.channels.input("u");
  const auto& out_y = gp.channels.output("y");
  std::vector<Index> act, meas, exo, perf;
  for (Index i = 0; i < in_u.size; ++i) act.push_back(in_u.offset + i);
  for (Index i = 0; i < gp.ny + gp.nw; ++i) meas.push_back(out_y.offset + i);
  for (Index i = 0; i < in_u.offset; ++i) exo.push_back(i);
  for (Index i = 0; i < out_y.offset; ++i) perf.push_back(i);
  const StateSpace cl = lti::interconnect(gp.sys, k, act, meas);
  return lti::select(cl, exo, perf);
}

}  // namespace

ModuleController ModuleController::static_gains(const MatrixXd& ky, const MatrixXd& kw) {
  if (ky.rows() != kw.rows()) {
    throw DimensionError("static gains: Ky and Kw must have the same row count");
  }
  MatrixXd d(ky.rows(), ky.cols() + kw.cols());
  d << ky, kw;
  return ModuleController(Kind::Static, StateSpace::gain(d), ky.cols(), kw.cols());
}

ModuleController ModuleController::dynamic(StateSpace sys, Index ny, Index nw) {
  if (sys.inputs() != ny + nw) {
    throw DimensionError("dynamic module: input count must equal dim(y) + dim(w)");
  }
  return ModuleController(Kind::Dynamic, std::move(sys), ny, nw);
}

GeneralizedPlant build_generalized_plant(const PartitionedPlant& design_plant, double alpha,
                                         double epsilon) {
  if (!(alpha > 0)) throw DimensionError("build_generalized_plant: alpha must be positive");
  if (!(epsilon >= 0)) throw DimensionError("build_generalized_plant: epsilon must be >= 0");
  const Index n = design_plant.states();
  const Index nd = design_plant.nd(), nu = design_plant.nu();
  const Index nz = design_plant.nz(), ny = design_plant.ny(), nw = design_plant.nw();
  const Index nmeas = ny + nw;
  const Index nn = epsilon > 0 ? nmeas : 0;
  const Index nx = epsilon > 0 ? n : 0;
  const Index ni = nd + nn + nu;
  const Index no = nz + nu + nx + nmeas;

  MatrixXd b = MatrixXd::Zero(n, ni);
  b.leftCols(nd) = design_plant.W();
  b.rightCols(nu) = design_plant.B();
  MatrixXd c = MatrixXd::Zero(no, n);
  c.topRows(nz) = design_plant.S();
  if (nx > 0) c.middleRows(nz + nu, nx) = epsilon * MatrixXd::Identity(n, n);
  c.middleRows(nz + nu + nx, ny) = design_plant.C();
  c.bottomRows(nw) = design_plant.Gamma();
  MatrixXd d = MatrixXd::Zero(no, ni);
  d.block(nz, nd + nn, nu, nu) = alpha * MatrixXd::Identity(nu, nu);
  if (nn > 0) d.block(nz + nu + nx, nd, nmeas, nn) = epsilon * MatrixXd::Identity(nmeas, nmeas);

  ChannelMap cmap;
  cmap.add_input("d", nd).add_input("n", nn).add_input("u", nu);
  cmap.add_output("z", nz).add_output("au", nu).add_output("xreg", nx);
  cmap.add_output("y", ny).add_output("w", nw);
  return GeneralizedPlant{StateSpace(design_plant.A(), b, c, d), cmap, alpha, epsilon, ny, nw};
}

SynthesisResult hinf_synthesize(const GeneralizedPlant& gp, double gamma_tol) {
  if (!(gamma_tol > 0)) throw DimensionError("hinf_synthesize: gamma_tol must be positive");
  std::string last_failure;
  auto feasible = [&](double gamma) {
    CentralController cc = central_controller(gp, gamma);
    if (!cc.failure.empty()) last_failure = cc.failure;
    return cc;
  };

  double lo = 0.0, hi = 1.0;
  CentralController best = feasible(hi);
  while (!best.failure.empty()) {
    lo = hi;
    hi *= 2.0;
    if (hi > kGammaCeiling) {
      throw SynthesisInfeasibleError("hinf_synthesize: infeasible for every gamma up to 1e8 (" +
                                     last_failure + ")");
    }
    best = feasible(hi);
  }
  // The absolute floor ends the search when no coupling exists (optimum 0).
  while (hi - lo > gamma_tol * hi && hi > kGammaFloor) {
    const double mid = 0.5 * (lo + hi);
    CentralController cc = feasible(mid);
    if (cc.failure.empty()) {
      hi = mid;
      best = std::move(cc);
    } else {
      lo = mid;
    }
  }

  // Near the optimum the central controller can be ill-conditioned; back off
  // until the closed loop is verifiably stable within the level.
  for (int attempt = 0; attempt < 40; ++attempt) {
    if (best.failure.empty()) {
      const StateSpace cl = generalized_loop(gp, best.k);
      const double abscissa = numerics::spectral_abscissa(cl.A());
      if (abscissa < -kStabilityMargin) {
        const double achieved = lti::hinf_norm(cl, 1e-6);
        if (achieved <= hi * (1 + gamma_tol)) {
          return {ModuleController::dynamic(best.k, gp.ny, gp.nw), hi};
        }
        last_failure = "closed-loop norm exceeds the design level";
      } else {
        last_failure = "central controller does not stabilize the generalized plant";
      }
    }
    hi *= 1 + 10 * gamma_tol;
    best = feasible(hi);
  }
  throw SynthesisInfeasibleError("hinf_synthesize: no verified controller near the optimum (" +
                                 last_failure + ")");
}

StateSpace module_loop(const PartitionedPlant& design_plant, const ModuleController& module) {
  if (module.ny() != design_plant.ny() || module.nw() != design_plant.nw() ||
      module.nu() != design_plant.nu()) {
    throw DimensionError("module_loop: module channels do not match the design plant");
  }
  const StateSpace p = design_plant.channel({"u"}, {"y", "w"});
  return lti::feedback(p, module.system());
}

double module_loop_abscissa(const PartitionedPlant& design_plant, const ModuleController& module) {
  return numerics::spectral_abscissa(module_loop(design_plant, module).A());
}

ModuleController static_gains(const MatrixXd& ky, const MatrixXd& kw,
                              const PartitionedPlant& design_plant) {
  if (ky.rows() != design_plant.nu() || ky.cols() != design_plant.ny() ||
      kw.rows() != design_plant.nu() || kw.cols() != design_plant.nw()) {
    throw DimensionError("static_gains: gain shapes do not match the design plant");
  }
  ModuleController module = ModuleController::static_gains(ky, kw);
  const double abscissa = module_loop_abscissa(design_plant, module);
  if (!(abscissa < -kStabilityMargin)) {
    std::ostringstream os;
    os << "static_gains: gains do not stabilize the new subsystem (spectral abscissa "
       << abscissa << ")";
    throw UnverifiedModuleError(os.str());
  }
  return module;
}

std::pair<MatrixXd, MatrixXd> lqr_projection_gains(const PartitionedPlant& design_plant,
                                                   double alpha) {
  if (!(alpha > 0)) throw DimensionError("lqr_projection_gains: alpha must be positive");
  const Index n = design_plant.states(), nu = design_plant.nu();
  const MatrixXd s = design_plant.S();
  // Small state weight keeps modes hidden from z (e.g. rigid-body) regulated.
  const MatrixXd q = s.transpose() * s + 1e-6 * MatrixXd::Identity(n, n);
  const MatrixXd r = alpha * alpha * MatrixXd::Identity(nu, nu);
  const MatrixXd p = numerics::solve_care(design_plant.A(), design_plant.B(), q, r);
  const MatrixXd f = -r.ldlt().solve(design_plant.B().transpose() * p);
  MatrixXd cm(design_plant.ny() + design_plant.nw(), n);
  cm << design_plant.C(), design_plant.Gamma();
  // Least-squares K with K cm ~ f.
  const MatrixXd k =
      cm.transpose().completeOrthogonalDecomposition().solve(f.transpose()).transpose();
  return {k.leftCols(design_plant.ny()), k.rightCols(design_plant.nw())};
}

}  // namespace retrofit::synthesis
