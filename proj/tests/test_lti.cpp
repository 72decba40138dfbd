#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "retrofit/lti.hpp"
#include "test_support.hpp"

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using namespace retrofit;
using namespace retrofit::lti;
using namespace testing_support;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

StateSpace first_order_lag() { return StateSpace(scalar(-1), scalar(1), scalar(1), scalar(0)); }

double max_diff(const StateSpace& x, const StateSpace& y, const std::vector<double>& grid) {
  double worst = 0;
  for (double w : grid) worst = std::max(worst, (freq_response(x, w) - freq_response(y, w)).norm());
  return worst;
}

}  // namespace

TEST_CASE("construction validates dimensions and entries") {
  CHECK_THROWS_AS(StateSpace(MatrixXd::Zero(2, 2), MatrixXd::Zero(3, 1), MatrixXd::Zero(1, 2),
                             MatrixXd::Zero(1, 1)),
                  DimensionError);
  MatrixXd bad = scalar(std::nan(""));
  CHECK_THROWS_AS(StateSpace(bad, scalar(1), scalar(1), scalar(0)), NumericalError);
  const StateSpace g = StateSpace::gain(MatrixXd::Ones(2, 3));
  CHECK(g.states() == 0);
  CHECK(g.outputs() == 2);
  CHECK(g.inputs() == 3);
}

TEST_CASE("channel selection") {
  MatrixXd d(2, 2);
  d << 1, 2, 3, 4;
  const StateSpace s = StateSpace::gain(d);
  const ChannelMap cmap({{"a", 1}, {"b", 1}}, {{"c", 1}, {"d", 1}});
  const StateSpace all = select_channels(s, cmap, {"a", "b"}, {"c", "d"});
  CHECK((all.D() - d).norm() == 0);
  const StateSpace bc = select_channels(s, cmap, {"b"}, {"c"});
  CHECK(bc.D().rows() == 1);
  CHECK(bc.D()(0, 0) == 2);
  CHECK_THROWS_AS(select_channels(s, cmap, {"x"}, {"c"}), LookupError);
  CHECK_THROWS_AS(ChannelMap({{"a", 1}, {"a", 1}}, {}), DimensionError);
}

TEST_CASE("series of static gains and identity") {
  const StateSpace s = series(StateSpace::gain(scalar(2)), StateSpace::gain(scalar(3)));
  CHECK(s.D()(0, 0) == 6);
  std::mt19937_64 rng(1);
  const StateSpace g = random_stable_system(rng, 3, 2, 2);
  const StateSpace gi = series(g, StateSpace::gain(MatrixXd::Identity(2, 2)));
  CHECK(max_diff(g, gi, random_frequencies(rng, 20)) < 1e-12);
  CHECK_THROWS_AS(series(g, StateSpace::gain(MatrixXd::Identity(3, 3))), DimensionError);
}

TEST_CASE("series equals pointwise product") {
  std::mt19937_64 rng(2);
  const StateSpace g1 = random_stable_system(rng, 3, 2, 3);
  const StateSpace g2 = random_stable_system(rng, 3, 4, 2);
  const StateSpace s = series(g1, g2);
  CHECK(s.states() == 6);
  for (double w : random_frequencies(rng, 50)) {
    const MatrixXcd expect = direct_response(g2, w) * direct_response(g1, w);
    CHECK((freq_response(s, w) - expect).norm() <= 1e-9 * std::max(1.0, expect.norm()));
  }
}

TEST_CASE("parallel and difference") {
  std::mt19937_64 rng(3);
  const StateSpace g1 = random_stable_system(rng, 2, 2, 2);
  const StateSpace g2 = random_stable_system(rng, 3, 2, 2);
  for (double w : random_frequencies(rng, 10)) {
    const MatrixXcd sum = direct_response(g1, w) + direct_response(g2, w);
    const MatrixXcd dif = direct_response(g1, w) - direct_response(g2, w);
    CHECK((freq_response(parallel(g1, g2), w) - sum).norm() < 1e-10 * sum.norm());
    CHECK((freq_response(difference(g1, g2), w) - dif).norm() < 1e-10 * std::max(1.0, dif.norm()));
  }
}

TEST_CASE("feedback of static gains and zero controller") {
  const StateSpace cl = feedback(StateSpace::gain(scalar(0.5)), StateSpace::gain(scalar(1)));
  CHECK(cl.D()(0, 0) == doctest::Approx(1.0));
  std::mt19937_64 rng(4);
  const StateSpace p = random_stable_system(rng, 3, 2, 2);
  const StateSpace cl0 = feedback(p, StateSpace::zero(2, 2));
  CHECK(cl0.states() == 3);
  CHECK(max_diff(p, cl0, random_frequencies(rng, 20)) < 1e-12);
  CHECK_THROWS_AS(feedback(StateSpace::gain(scalar(1)), StateSpace::gain(scalar(1))), IllPosedLoopError);
}

TEST_CASE("feedback matches the push-through closed-loop formula") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const StateSpace p = random_stable_system(rng, 3, 2, 3);
    MatrixXd kd = 0.2 * random_matrix(rng, 3, 2);
    const StateSpace k(random_stable(rng, 2), random_matrix(rng, 2, 2), random_matrix(rng, 3, 2), kd);
    const StateSpace cl = feedback(p, k);
    CHECK(cl.states() == p.states() + k.states());
    for (double w : random_frequencies(rng, 50)) {
      const MatrixXcd pw = direct_response(p, w), kw = direct_response(k, w);
      const MatrixXcd id = MatrixXcd::Identity(3, 3);
      const MatrixXcd expect = pw * (id - kw * pw).inverse();
      CHECK((freq_response(cl, w) - expect).norm() <= 1e-9 * std::max(1.0, expect.norm()));
    }
  }
}

TEST_CASE("loop inverse identity holds pointwise") {
  // (I - PK)^{-1} = I + PK (I - PK)^{-1} = I + (I - PK)^{-1} PK
  std::mt19937_64 rng(6);
  const StateSpace p = random_stable_system(rng, 3, 2, 2);
  const StateSpace k = random_stable_system(rng, 2, 2, 2);
  for (double w : random_frequencies(rng, 50)) {
    const MatrixXcd pk = freq_response(p, w) * freq_response(k, w);
    const MatrixXcd id = MatrixXcd::Identity(2, 2);
    const MatrixXcd inv = (id - pk).inverse();
    CHECK((inv - (id + pk * inv)).norm() <= 1e-9 * inv.norm());
    CHECK((inv - (id + inv * pk)).norm() <= 1e-9 * inv.norm());
  }
}

TEST_CASE("partial interconnect keeps external channels") {
  std::mt19937_64 rng(7);
  const StateSpace p = random_stable_system(rng, 4, 3, 3);
  const StateSpace k = StateSpace::gain(0.3 * random_matrix(rng, 1, 2));
  // Controller reads outputs {0, 2} and drives input 1.
  const StateSpace cl = interconnect(p, k, {1}, {0, 2});
  for (double w : random_frequencies(rng, 10)) {
    const MatrixXcd pw = direct_response(p, w);
    MatrixXcd inj = MatrixXcd::Zero(3, 1);
    inj(1, 0) = 1;
    MatrixXcd sel = MatrixXcd::Zero(2, 3);
    sel(0, 0) = 1;
    sel(1, 2) = 1;
    const MatrixXcd kk = inj * k.D().cast<std::complex<double>>() * sel;
    const MatrixXcd expect = (MatrixXcd::Identity(3, 3) - pw * kk).inverse() * pw;
    CHECK((freq_response(cl, w) - expect).norm() <= 1e-9 * expect.norm());
  }
}

TEST_CASE("frequency response") {
  const StateSpace g = StateSpace::gain(MatrixXd::Ones(2, 2));
  CHECK((freq_response(g, 3.0) - MatrixXcd::Ones(2, 2)).norm() == 0);
  const MatrixXcd h = freq_response(first_order_lag(), 1.0);
  CHECK(std::abs(h(0, 0) - std::complex<double>(0.5, -0.5)) < 1e-15);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const StateSpace s = random_stable_system(rng, 4, 2, 2);
    const MatrixXcd ref = modal_response(s, 2.0);
    CHECK((freq_response(s, 2.0) - ref).norm() <= 1e-10 * ref.norm());
  }
  MatrixXd rot(2, 2);
  rot << 0, 1, -1, 0;
  const StateSpace osc(rot, MatrixXd::Ones(2, 1), MatrixXd::Ones(1, 2), scalar(0));
  CHECK_THROWS_AS(freq_response(osc, 1.0), PoleAtFrequencyError);
}

TEST_CASE("impulse response of a first-order lag") {
  const double dt = 1e-3;
  const MatrixXd y = impulse_response(first_order_lag(), 0, dt, 1001);
  CHECK(std::abs(y(0, 1000) - std::exp(-1.0)) < 1e-6);

  // A one-sample 1/dt pulse through the zero-order hold converges at O(dt).
  MatrixXd pulse = MatrixXd::Zero(1, 1001);
  pulse(0, 0) = 1 / dt;
  const MatrixXd yp = simulate(first_order_lag(), pulse, dt);
  CHECK(std::abs(yp(0, 1000) - std::exp(-1.0)) < 2 * dt);
}

TEST_CASE("simulation of a static gain is exact") {
  MatrixXd d(2, 1);
  d << 2, -3;
  std::mt19937_64 rng(9);
  const MatrixXd u = random_matrix(rng, 1, 17);
  CHECK((simulate(StateSpace::gain(d), u, 0.1) - d * u).norm() == 0);
}

TEST_CASE("impulse response of a lightly damped oscillator") {
  const double wn = 3.0, zeta = 0.05, wd = wn * std::sqrt(1 - zeta * zeta);
  MatrixXd a(2, 2), b(2, 1), c(1, 2);
  a << 0, 1, -wn * wn, -2 * zeta * wn;
  b << 0, 1;
  c << 1, 0;
  const StateSpace s(a, b, c, scalar(0));
  const double dt = 1e-3;
  const MatrixXd y = impulse_response(s, 0, dt, 5001);
  double worst = 0;
  for (int k = 0; k <= 5000; ++k) {
    const double t = k * dt;
    worst = std::max(worst, std::abs(y(0, k) - std::exp(-zeta * wn * t) * std::sin(wd * t) / wd));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("zero-order-hold step response and refinement") {
  std::mt19937_64 rng(10);
  const StateSpace s = random_stable_system(rng, 3, 1, 1, false);
  const double t_end = 2.0;
  auto run = [&](double dt) {
    const int n = static_cast<int>(std::lround(t_end / dt)) + 1;
    MatrixXd u(1, n);
    for (int k = 0; k < n; ++k) u(0, k) = std::sin(k * dt);
    return simulate(s, u, dt)(0, n - 1);
  };
  CHECK(std::abs(run(1e-2) - run(5e-3)) < 1e-2);
}

TEST_CASE("minimal realization") {
  MatrixXd a(2, 2), b(2, 1), c(1, 2);
  a << -1, 0, 0, 0;
  b << 1, 0;
  c << 1, 0;
  const StateSpace m = minreal(StateSpace(a, b, c, scalar(0)));
  CHECK(m.states() == 1);
  CHECK(m.A()(0, 0) == doctest::Approx(-1.0));

  std::mt19937_64 rng(11);
  const StateSpace s = random_stable_system(rng, 5, 2, 2);
  const StateSpace sm = minreal(s);
  CHECK(sm.states() == 5);
  CHECK(max_diff(s, sm, random_frequencies(rng, 20)) < 1e-8);
}

TEST_CASE("minimal realization removes hidden modes and is idempotent") {
  std::mt19937_64 rng(12);
  const StateSpace g1 = random_stable_system(rng, 3, 2, 2);
  const StateSpace big = parallel(series(g1, StateSpace::gain(MatrixXd::Identity(2, 2))),
                                  random_stable_system(rng, 2, 2, 2));
  const StateSpace hidden = append(big, random_stable_system(rng, 3, 0, 0));
  const StateSpace m1 = minreal(hidden);
  CHECK(m1.states() == 5);
  CHECK(minreal(m1).states() == m1.states());
  CHECK(max_diff(hidden, m1, random_frequencies(rng, 20)) < 1e-8);
  const StateSpace zero_tf = difference(g1, g1);
  CHECK(minreal(zero_tf).states() == 0);
}

TEST_CASE("PBH deflation keeps only modes visible at the output") {
  MatrixXd a(2, 2), c(1, 2);
  a << 0, 0, 0, -2;
  c << 0, 1;
  CHECK(deflated_abscissa<double>(a, c) == doctest::Approx(-2.0));
  c << 1, 1;
  CHECK(std::abs(deflated_abscissa<double>(a, c)) < 1e-14);
}
