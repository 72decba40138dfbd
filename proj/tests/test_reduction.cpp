#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "retrofit/reduction.hpp"
#include "test_support.hpp"

using Eigen::MatrixXd;
using namespace retrofit;
using namespace retrofit::reduction;
using namespace testing_support;

namespace {
MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }
}  // namespace

TEST_CASE("gramians of a first-order lag") {
  const auto g = gramians(StateSpace(scalar(-1), scalar(1), scalar(1), scalar(0)));
  CHECK(g.wc(0, 0) == doctest::Approx(0.5));
  CHECK(g.wo(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("gramians with no input") {
  std::mt19937_64 rng(1);
  const StateSpace s(random_stable(rng, 4), MatrixXd::Zero(4, 2), random_matrix(rng, 1, 4),
                     MatrixXd::Zero(1, 2));
  CHECK(gramians(s).wc.norm() == 0);
}

TEST_CASE("gramians match the vectorized reference") {
  std::mt19937_64 rng(2);
  const StateSpace s = random_stable_system(rng, 6, 2, 3);
  const auto g = gramians(s);
  const MatrixXd wc = lyapunov_oracle(s.A(), s.B() * s.B().transpose());
  const MatrixXd wo = lyapunov_oracle(s.A().transpose(), s.C().transpose() * s.C());
  CHECK((g.wc - wc).norm() <= 1e-9 * wc.norm());
  CHECK((g.wo - wo).norm() <= 1e-9 * wo.norm());
  CHECK((s.A() * g.wc + g.wc * s.A().transpose() + s.B() * s.B().transpose()).norm() < 1e-9 * wc.norm());
}

TEST_CASE("unstable systems are rejected") {
  const StateSpace s(scalar(1), scalar(1), scalar(1), scalar(0));
  CHECK_THROWS_AS(gramians(s), StabilityPreconditionError);
  CHECK_THROWS_AS(balanced_truncate(s, 1), StabilityPreconditionError);
}

TEST_CASE("full-order truncation reproduces the system") {
  std::mt19937_64 rng(3);
  const StateSpace s = random_stable_system(rng, 5, 2, 2);
  const auto red = balanced_truncate(s, 5);
  CHECK(red.reduced.states() == 5);
  CHECK(red.error_bound == 0);
  for (double w : random_frequencies(rng, 20)) {
    CHECK((lti::freq_response(red.reduced, w) - direct_response(s, w)).norm() < 1e-9);
  }
  CHECK_THROWS_AS(balanced_truncate(s, 6), DimensionError);
}

TEST_CASE("zero-order truncation leaves the feedthrough") {
  std::mt19937_64 rng(4);
  const StateSpace s = random_stable_system(rng, 5, 2, 2, false);
  const auto red = balanced_truncate(s, 0);
  CHECK(red.reduced.states() == 0);
  CHECK(red.reduced.D().norm() == 0);
  CHECK(lti::hinf_norm(s) <= red.error_bound);
}

TEST_CASE("truncation error obeys the twice-the-tail bound") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const StateSpace s = random_stable_system(rng, 8, 2, 2);
    for (Eigen::Index r = 0; r <= 8; ++r) {
      const auto red = balanced_truncate(s, r);
      for (Eigen::Index i = 1; i < red.hankel_values.size(); ++i) {
        CHECK(red.hankel_values(i) <= red.hankel_values(i - 1));
      }
      const StateSpace err = lti::difference(s, red.reduced);
      const double e = err.states() == 0 ? err.D().norm() : lti::hinf_norm(err, 1e-9);
      CHECK(e <= red.error_bound + 1e-8);
    }
  }
}
