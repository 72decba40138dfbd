#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "retrofit/experiment.hpp"
#include "retrofit/synthesis.hpp"
#include "test_support.hpp"

using Eigen::MatrixXd;
using namespace retrofit;
using namespace retrofit::synthesis;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

/// x' = a x + d + u, z = x, y = x, with inert v/w channels.
PartitionedPlant scalar_plant(double a, double s = 1.0) {
  return PartitionedPlant::from_blocks(scalar(a), scalar(0), scalar(1), scalar(1), scalar(0),
                                       scalar(s), scalar(1));
}

/// J(k) of u = -k y on the scalar plant: sqrt(1 + alpha^2 k^2) / (k - a).
double scalar_grid_optimum(double a, double alpha) {
  double best = std::numeric_limits<double>::infinity();
  for (double k = a + 1e-3; k < a + 200; k *= 1.0005) {
    best = std::min(best, std::sqrt(1 + alpha * alpha * k * k) / (k - a));
  }
  return best;
}

const oscnet::Partition& benchmark_partition() {
  static const oscnet::Partition p =
      oscnet::partition(oscnet::benchmark_network(4.0), oscnet::benchmark_assignment());
  return p;
}

}  // namespace

TEST_CASE("generalized plant layout") {
  const auto& g = benchmark_partition().g;
  const GeneralizedPlant gp = build_generalized_plant(g, 0.2, 1e-4);
  const auto& ch = gp.channels;
  CHECK(ch.output("z").size == g.nz());
  CHECK(ch.output("au").size == g.nu());
  CHECK(ch.input("n").size == g.ny() + g.nw());
  const MatrixXd d12 = lti::select_channels(gp.sys, ch, {"u"}, {"au"}).D();
  CHECK((d12 - 0.2 * MatrixXd::Identity(g.nu(), g.nu())).norm() == 0);

  const GeneralizedPlant gp2 = build_generalized_plant(g, 0.01, 1e-4);
  CHECK(gp2.sys.inputs() == gp.sys.inputs());
  CHECK(gp2.sys.outputs() == gp.sys.outputs());

  const GeneralizedPlant gp0 = build_generalized_plant(g, 0.2, 0.0);
  CHECK(gp0.channels.input("n").size == 0);
  CHECK(gp0.channels.output("xreg").size == 0);

  CHECK_THROWS_AS(build_generalized_plant(g, 0.0, 1e-4), Error);
}

TEST_CASE("scalar plant matches a static-gain grid search") {
  for (double alpha : {0.2, 0.5, 1.0}) {
    const auto res = hinf_synthesize(build_generalized_plant(scalar_plant(1.0), alpha, 1e-4));
    const double oracle = scalar_grid_optimum(1.0, alpha);
    CAPTURE(alpha);
    CHECK(std::abs(res.gamma - oracle) <= 0.02 * oracle);
    CHECK(module_loop_abscissa(scalar_plant(1.0), res.controller) < 0);
  }
}

TEST_CASE("zero performance coupling gives a vanishing level") {
  const auto res = hinf_synthesize(build_generalized_plant(scalar_plant(-1.0, 0.0), 0.2, 1e-4));
  CHECK(res.gamma <= 1e-3);
}

TEST_CASE("benchmark design is stabilizing, verified and deterministic") {
  const auto& g = benchmark_partition().g;
  const GeneralizedPlant gp = build_generalized_plant(g, 0.2, 1e-4);
  const auto a = hinf_synthesize(gp);
  const auto b = hinf_synthesize(gp);
  CHECK(a.gamma == b.gamma);
  CHECK(a.controller.system().A() == b.controller.system().A());
  CHECK(a.controller.system().B() == b.controller.system().B());
  CHECK(a.controller.system().C() == b.controller.system().C());
  CHECK(module_loop_abscissa(g, a.controller) < -kStabilityMargin);

  // Closed loop of the generalized plant meets the achieved level.
  const auto& ch = gp.channels;
  std::vector<Index> act, meas;
  for (Index i = 0; i < ch.input("u").size; ++i) act.push_back(ch.input("u").offset + i);
  for (const char* name : {"y", "w"})
    for (Index i = 0; i < ch.output(name).size; ++i) meas.push_back(ch.output(name).offset + i);
  const StateSpace cl = lti::interconnect(gp.sys, a.controller.system(), act, meas);
  std::vector<Index> ins, outs;
  for (const char* name : {"d", "n"})
    for (Index i = 0; i < ch.input(name).size; ++i) ins.push_back(ch.input(name).offset + i);
  for (const char* name : {"z", "au", "xreg"})
    for (Index i = 0; i < ch.output(name).size; ++i) outs.push_back(ch.output(name).offset + i);
  const StateSpace perf = lti::select(cl, ins, outs);
  CHECK(numerics::spectral_abscissa(cl.A()) < 0);
  CHECK(lti::hinf_norm(perf, 1e-8) <= a.gamma * (1 + 1e-3));
}

TEST_CASE("achieved level does not increase as the control weight decreases") {
  const auto& g = benchmark_partition().g;
  const double hi = hinf_synthesize(build_generalized_plant(g, 0.2, 1e-4)).gamma;
  const double lo = hinf_synthesize(build_generalized_plant(g, 0.01, 1e-4)).gamma;
  CHECK(lo <= hi * (1 + 1e-3));
}

TEST_CASE("static gains are gated by the closed-loop abscissa") {
  const PartitionedPlant stable = scalar_plant(-1.0);
  const ModuleController k = static_gains(scalar(0), scalar(0), stable);
  CHECK(k.kind() == ModuleController::Kind::Static);

  const PartitionedPlant unstable = scalar_plant(1.0);
  try {
    static_gains(scalar(0), scalar(0), unstable);
    FAIL("unstable design plant accepted");
  } catch (const UnverifiedModuleError& e) {
    CHECK(std::string(e.what()).find("abscissa") != std::string::npos);
  }
  // u = -2 y: abscissa 1 - 2 = -1 under positive feedback.
  CHECK_NOTHROW(static_gains(scalar(-2), scalar(0), unstable));
}

TEST_CASE("projected LQR gains accepted iff the eigenvalue check passes") {
  const auto& part = benchmark_partition();
  for (int napx : {experiment::kNoModel, 0}) {
    const auto apx = experiment::approximate_environment(part.env, part.g.nw(), part.g.nv(), napx,
                                                         1e-10, 1e-8);
    const PartitionedPlant gplus = new_subsystem(part.g, apx.apx);
    const auto [ky, kw] = lqr_projection_gains(gplus, 0.2);
    CHECK(ky.rows() == part.g.nu());
    CHECK(ky.cols() == part.g.ny());
    CHECK(kw.cols() == part.g.nw());
    // A + L D_apx Gamma + B (Ky C + Kw Gamma) for a static model.
    const MatrixXd a = part.g.A() + part.g.L() * apx.apx.sys().D() * part.g.Gamma() +
                       part.g.B() * (ky * part.g.C() + kw * part.g.Gamma());
    const double oracle = Eigen::EigenSolver<MatrixXd>(a).eigenvalues().real().maxCoeff();
    bool accepted = true;
    try {
      static_gains(ky, kw, gplus);
    } catch (const UnverifiedModuleError&) {
      accepted = false;
    }
    CAPTURE(napx);
    CAPTURE(oracle);
    CHECK(accepted == (oracle < -kStabilityMargin));
  }
}
