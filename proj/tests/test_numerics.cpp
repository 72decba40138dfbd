#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "retrofit/numerics.hpp"
#include "test_support.hpp"

using Eigen::MatrixXd;
using namespace retrofit;
using namespace testing_support;

TEST_CASE("spectral abscissa of simple matrices") {
  CHECK(numerics::spectral_abscissa(-MatrixXd::Identity(3, 3)) == doctest::Approx(-1.0));
  MatrixXd rot(2, 2);
  rot << 0, 1, -1, 0;
  CHECK(std::abs(numerics::spectral_abscissa(rot)) < 1e-14);
  CHECK_THROWS_AS(numerics::spectral_abscissa(MatrixXd::Zero(2, 3)), DimensionError);
}

TEST_CASE("spectral abscissa agrees with characteristic polynomial roots") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd a = random_matrix(rng, 8, 8);
    double oracle = -1e300;
    for (const auto& r : poly_roots(char_poly(a))) oracle = std::max(oracle, r.real());
    CHECK(std::abs(numerics::spectral_abscissa(a) - oracle) < 1e-8);
  }
}

TEST_CASE("matrix exponential") {
  CHECK((numerics::expm(MatrixXd::Zero(3, 3), 1.0) - MatrixXd::Identity(3, 3)).norm() < 1e-15);
  MatrixXd d(2, 2);
  d << -1, 0, 0, 2;
  MatrixXd ed(2, 2);
  ed << std::exp(-1.0), 0, 0, std::exp(2.0);
  CHECK((numerics::expm(d, 1.0) - ed).norm() < 1e-13);
  MatrixXd nil(2, 2);
  nil << 0, 1, 0, 0;
  MatrixXd en(2, 2);
  en << 1, 1, 0, 1;
  CHECK((numerics::expm(nil, 1.0) - en).norm() < 1e-15);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd a = random_matrix(rng, 6, 6);
    const double s = uniform(rng, 0, 1), t = uniform(rng, 0, 1);
    const MatrixXd lhs = numerics::expm(a, s + t);
    const MatrixXd rhs = numerics::expm(a, s) * numerics::expm(a, t);
    CHECK((lhs - rhs).norm() <= 1e-9 * std::max(1.0, lhs.norm()));
  }
}

TEST_CASE("ordered Schur form places selected eigenvalues first") {
  std::mt19937_64 rng(3);
  const MatrixXd a = random_matrix(rng, 7, 7);
  const auto s = numerics::ordered_schur(a, [](std::complex<double> z) { return z.real() < 0; });
  const Eigen::MatrixXcd rebuilt = s.u * s.t * s.u.adjoint();
  CHECK((rebuilt - a.cast<std::complex<double>>()).norm() < 1e-10 * a.norm());
  for (Eigen::Index i = 0; i < 7; ++i) {
    CHECK((s.t(i, i).real() < 0) == (i < s.selected));
    for (Eigen::Index j = 0; j < i; ++j) CHECK(std::abs(s.t(i, j)) < 1e-12);
  }
}

TEST_CASE("Lyapunov solver: closed forms") {
  const MatrixXd p = numerics::solve_lyapunov(-MatrixXd::Identity(2, 2), 2 * MatrixXd::Identity(2, 2));
  CHECK((p - MatrixXd::Identity(2, 2)).norm() < 1e-14);
  MatrixXd a(1, 1), q(1, 1);
  a << -1;
  q << 4;
  CHECK(numerics::solve_lyapunov(a, q)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("Lyapunov solver matches vectorized reference") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd a = random_stable(rng, 6);
    const MatrixXd g = random_matrix(rng, 6, 6);
    const MatrixXd q = g * g.transpose();
    const MatrixXd p = numerics::solve_lyapunov(a, q);
    const MatrixXd ref = lyapunov_oracle(a, q);
    CHECK((p - ref).norm() <= 1e-9 * std::max(1.0, ref.norm()));
    CHECK((p - p.transpose()).norm() <= 1e-10 * p.norm());
  }
}

TEST_CASE("Lyapunov solver in the Schur-based regime") {
  std::mt19937_64 rng(8);
  for (Eigen::Index n : {25, 40, 80}) {
    const MatrixXd a = random_stable(rng, n);
    const MatrixXd g = random_matrix(rng, n, 3);
    const MatrixXd q = g * g.transpose();
    const MatrixXd p = numerics::solve_lyapunov(a, q);
    const double res = (a * p + p * a.transpose() + q).norm();
    CHECK(res <= 1e-8 * (a.norm() * p.norm() + q.norm()));
    CHECK((p - p.transpose()).norm() <= 1e-10 * p.norm());
    if (n <= 40) {
      CHECK((p - lyapunov_oracle(a, q)).norm() <= 1e-8 * p.norm());
    }
  }
}

TEST_CASE("Lyapunov solver rejects a singular operator") {
  MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  CHECK_THROWS_AS(numerics::solve_lyapunov(a, MatrixXd::Identity(2, 2)), SingularEquationError);
}

TEST_CASE("CARE: scalar closed forms") {
  MatrixXd a(1, 1), b(1, 1), q(1, 1), r(1, 1);
  a << 0;
  b << 1;
  q << 1;
  r << 1;
  CHECK(numerics::solve_care(a, b, q, r)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  a << 1;
  q << 2;
  CHECK(numerics::solve_care(a, b, q, r)(0, 0) == doctest::Approx(1.0 + std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("CARE: random instances are stabilizing with small residual") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd a = random_matrix(rng, 5, 5);
    const MatrixXd b = random_matrix(rng, 5, 2);
    const MatrixXd g = random_matrix(rng, 5, 5);
    const MatrixXd q = g * g.transpose();
    const MatrixXd r = MatrixXd::Identity(2, 2) * uniform(rng, 0.5, 2.0);
    const MatrixXd p = numerics::solve_care(a, b, q, r);
    const double res = numerics::care_residual<double>(a, b, q, r, p);
    CHECK(res <= 1e-8 * std::max(1.0, p.norm() * a.norm() + q.norm()));
    const MatrixXd acl = a - b * r.inverse() * b.transpose() * p;
    CHECK(numerics::spectral_abscissa(acl) < 0);
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(p).eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("CARE: imaginary-axis Hamiltonian eigenvalues are reported") {
  // Undamped oscillator with no state weight: Hamiltonian has eigenvalues +-i.
  MatrixXd a(2, 2), b(2, 1), q = MatrixXd::Zero(2, 2), r = MatrixXd::Identity(1, 1);
  a << 0, 1, -1, 0;
  b << 0, 0;
  CHECK_THROWS_AS(numerics::solve_care(a, b, q, r), NoStabilizingSolutionError);
}

TEST_CASE("H-infinity norm of textbook systems") {
  MatrixXd a(1, 1), b(1, 1), c(1, 1), d = MatrixXd::Zero(1, 1);
  a << -1;
  b << 1;
  c << 1;
  CHECK(numerics::hinf_norm<double>(a, b, c, d) == doctest::Approx(1.0).epsilon(1e-6));

  const double wn = 2.0, zeta = 0.1;
  MatrixXd a2(2, 2), b2(2, 1), c2(1, 2);
  a2 << 0, 1, -wn * wn, -2 * zeta * wn;
  b2 << 0, wn * wn;
  c2 << 1, 0;
  const double peak = 1.0 / (2 * zeta * std::sqrt(1 - zeta * zeta));
  CHECK(numerics::hinf_norm<double>(a2, b2, c2, d) == doctest::Approx(peak).epsilon(1e-6));
}

TEST_CASE("H-infinity norm rejects imaginary-axis poles") {
  MatrixXd a = MatrixXd::Zero(1, 1), b = MatrixXd::Ones(1, 1), c = MatrixXd::Ones(1, 1);
  CHECK_THROWS_AS(numerics::hinf_norm<double>(a, b, c, MatrixXd::Zero(1, 1)), NormUndefinedError);
}

TEST_CASE("H-infinity norm matches a dense frequency scan") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const StateSpace s = random_stable_system(rng, 10, 2, 3, trial % 2 == 0);
    const double norm = numerics::hinf_norm<double>(s.A(), s.B(), s.C(), s.D());
    const double scan = grid_scan(s, 10000);
    CHECK(std::abs(norm - scan) <= 1e-4 * scan);
    CHECK(scan <= norm * (1 + 1e-6));
  }
}
