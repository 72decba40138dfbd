#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <complex>

#include "retrofit/errors.hpp"
#include "retrofit/oscnet.hpp"
#include "retrofit/retrofit.hpp"
#include "test_support.hpp"

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace retrofit;
using namespace retrofit::oscnet;
using testing_support::direct_response;
using testing_support::sigma_max;

namespace {

/// Force-to-state response of the whole network, written from the node
/// equations: (-w^2 M + jw D + Lap) th = f.
MatrixXcd node_response(const NetworkSpec& spec, double w) {
  const Index n = spec.node_count;
  MatrixXd lap = MatrixXd::Zero(n, n);
  for (const Edge& e : spec.edges) {
    const bool a = std::count(spec.subsystem_nodes.begin(), spec.subsystem_nodes.end(), e.i) > 0;
    const bool b = std::count(spec.subsystem_nodes.begin(), spec.subsystem_nodes.end(), e.j) > 0;
    const double k = a == b ? e.stiffness : spec.kc;
    lap(e.i, e.i) += k;
    lap(e.j, e.j) += k;
    lap(e.i, e.j) -= k;
    lap(e.j, e.i) -= k;
  }
  const std::complex<double> s(0, w);
  MatrixXcd m = lap.cast<std::complex<double>>();
  for (Index i = 0; i < n; ++i) m(i, i) += s * s * spec.inertia(i) + s * spec.damping(i);
  return m.fullPivLu().inverse();
}

NetworkSpec small_network(double kc) {
  NetworkSpec s;
  s.node_count = 5;
  s.inertia = VectorXd::Constant(5, 1.5);
  s.damping = VectorXd::Constant(5, 0.3);
  s.subsystem_nodes = {0, 1};
  s.kc = kc;
  s.edges = {{0, 1, 2.0}, {1, 2, 99.0}, {2, 3, 1.0}, {3, 4, 4.0}, {0, 4, 99.0}};
  return s;
}

}  // namespace

TEST_CASE("benchmark network has the stated shape") {
  const NetworkSpec spec = benchmark_network(3.0);
  CHECK(spec.node_count == 36);
  CHECK(spec.subsystem_nodes == std::vector<Index>{0, 1, 2, 3, 4, 5});
  CHECK(boundary_nodes(spec) == std::vector<Index>{0, 4, 5});
  CHECK(environment_nodes(spec).size() == 30);
  for (const Edge& e : spec.edges) {
    const bool inside = (e.i < 6) == (e.j < 6);
    CHECK(effective_stiffness(spec, e) == (inside ? 5.0 : 3.0));
  }

  // Connected: exactly one zero eigenvalue of the Laplacian.
  const VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(laplacian(spec)).eigenvalues();
  CHECK(std::abs(ev(0)) <= 1e-10);
  CHECK(ev(1) > 1e-6);
  // Same topology for the same seed, a different one for another seed.
  CHECK(benchmark_network(3.0).edges.size() == spec.edges.size());
  const auto other = benchmark_network(3.0, 2);
  bool differs = other.edges.size() != spec.edges.size();
  for (std::size_t k = 0; !differs && k < spec.edges.size(); ++k)
    differs = other.edges[k].i != spec.edges[k].i || other.edges[k].j != spec.edges[k].j;
  CHECK(differs);
}

TEST_CASE("network state space has a single rigid mode") {
  const StateSpace net = build_network(benchmark_network(2.0));
  const auto ev = Eigen::EigenSolver<MatrixXd>(net.A()).eigenvalues();
  int zeros = 0;
  for (Index k = 0; k < ev.size(); ++k) {
    if (std::abs(ev(k)) <= 1e-8) ++zeros;
    CHECK(ev(k).real() <= 1e-9);
  }
  CHECK(zeros == 1);
}

TEST_CASE("partition closed with its environment reproduces the whole network") {
  for (double kc : {0.5, 4.0}) {
    const NetworkSpec spec = benchmark_network(kc);
    const ChannelAssignment assign = benchmark_assignment();
    const Partition p = partition(spec, assign);
    CHECK(p.g.states() == 12);
    CHECK(p.g.nu() == 3);
    CHECK(p.g.nd() == 3);
    CHECK(p.g.ny() == 6);
    CHECK(p.g.nz() == 6);
    CHECK(p.g.nv() == 3);
    CHECK(p.g.nw() == 3);
    CHECK(p.env.states() == 60);
    const StateSpace pre = assemble_preexisting(p.g, p.env);
    for (double w : {0.37, 1.0, 2.9}) {
      const MatrixXcd h = node_response(spec, w);
      const std::complex<double> s(0, w);
      // Inputs (d, u), outputs (z = th'_eval, y = (th_meas, th'_meas)).
      MatrixXcd expected(12, 6);
      for (Index j = 0; j < 6; ++j) {
        const Index f = j < 3 ? assign.disturbed[j] : assign.actuated[j - 3];
        for (Index i = 0; i < 6; ++i) expected(i, j) = s * h(assign.evaluated[i], f);
        for (Index i = 0; i < 3; ++i) {
          expected(6 + i, j) = h(assign.measured[i], f);
          expected(9 + i, j) = s * h(assign.measured[i], f);
        }
      }
      CAPTURE(kc);
      CAPTURE(w);
      CHECK(sigma_max(direct_response(pre, w) - expected) <= 1e-9 * sigma_max(expected));
    }
  }
}

TEST_CASE("environment is stable for positive boundary stiffness and marginal at zero") {
  for (double kc : {0.5, 1.0, 10.0}) {
    const Partition p = partition(benchmark_network(kc), benchmark_assignment());
    CHECK(numerics::spectral_abscissa(p.env.sys().A()) < -1e-6);
    CHECK(check_admissible(p.g, p.env));
  }
  const Partition p0 = partition(benchmark_network(0.0), benchmark_assignment());
  CHECK(std::abs(numerics::spectral_abscissa(p0.env.sys().A())) <= 1e-9);
  CHECK(p0.env.sys().C().isZero(0));
}

TEST_CASE("environment output is the boundary force") {
  const NetworkSpec spec = small_network(3.0);
  ChannelAssignment assign{{0}, {1}, {0}, {0, 1}};
  const Partition p = partition(spec, assign);
  CHECK(p.boundary == std::vector<Index>{0, 1});
  CHECK(p.environment == std::vector<Index>{2, 3, 4});
  // At DC with the boundary angle held at 1 the environment follows rigidly
  // and the boundary force vanishes.
  const MatrixXcd dc = direct_response(p.env.sys(), 0.0);
  CHECK(std::abs((dc * Eigen::VectorXcd::Ones(2)).sum()) <= 1e-9);
  // Instantaneous part: -kc at each boundary node.
  CHECK(p.env.sys().D() == -3.0 * MatrixXd::Identity(2, 2));
}

TEST_CASE("invalid networks are rejected") {
  NetworkSpec s = small_network(1.0);
  s.subsystem_nodes = {0, 9};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = small_network(1.0);
  s.kc = -1;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = small_network(1.0);
  s.inertia(2) = 0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = small_network(1.0);
  s.edges.push_back({3, 3, 1.0});
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = small_network(1.0);
  s.edges.push_back({2, 4, -1.0});
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = small_network(1.0);
  s.subsystem_nodes = {0, 1, 2, 3, 4};
  CHECK_THROWS_AS(validate(s), ConfigError);

  s = small_network(1.0);
  CHECK_THROWS_AS(partition(s, ChannelAssignment{{3}, {0}, {0}, {0}}), ConfigError);
  s.edges = {{0, 1, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}};
  CHECK_THROWS_AS(partition(s, ChannelAssignment{{0}, {0}, {0}, {0}}), ConfigError);
}
