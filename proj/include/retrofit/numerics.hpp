#pragma once

// Dense kernels shared by every other module: eigenvalues, matrix
// exponential, Lyapunov and Riccati solvers, and the H-infinity norm.
//
// Functions are templated on the Eigen expression type so they accept blocks
// and expressions directly; the scalar must be a real floating-point type.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "retrofit/errors.hpp"

namespace retrofit::numerics {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ComplexMatrix = Matrix<std::complex<Scalar>>;
template <typename Scalar>
using ComplexVector = Vector<std::complex<Scalar>>;

/// Largest state count for which the Lyapunov equation is solved by the
/// Kronecker-vectorized linear system; Bartels-Stewart is used above it.
inline constexpr Eigen::Index kKroneckerMaxStates = 20;

/// Hamiltonian eigenvalues with |Re| below this (relative to max(1, |lambda|))
/// count as imaginary-axis eigenvalues in the Riccati solvers.
inline constexpr double kImaginaryAxisTol = 1e-9;

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& a, const char* what) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << a.rows() << "x"
       << a.cols();
    throw DimensionError(os.str());
  }
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& a, const char* what) {
  if (!a.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite matrix entries");
  }
}

template <typename Scalar>
Scalar norm1(const Matrix<Scalar>& a) {
  if (a.size() == 0) return Scalar(0);
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

}  // namespace detail

/// Eigenvalues of a real square matrix (Hessenberg reduction + shifted QR).
template <typename Derived>
ComplexVector<typename Derived::Scalar> eigenvalues(
    const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(a, "eigenvalues");
  if (a.rows() == 0) return ComplexVector<Scalar>(0);
  detail::require_finite(a, "eigenvalues");
  Eigen::EigenSolver<Matrix<Scalar>> es(a.eval(), /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigenvalues: QR iteration did not converge");
  }
  return es.eigenvalues();
}

/// Maximum real part over the eigenvalues of `a`; -inf for an empty matrix.
template <typename Derived>
typename Derived::Scalar spectral_abscissa(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(a, "spectral_abscissa");
  if (a.rows() == 0) return -std::numeric_limits<Scalar>::infinity();
  return eigenvalues(a).real().maxCoeff();
}

/// e^{A t} by scaling and squaring with a Pade core.
template <typename Derived>
Matrix<typename Derived::Scalar> expm(const Eigen::MatrixBase<Derived>& a,
                                      typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(a, "expm");
  Matrix<Scalar> at = a * t;
  if (at.rows() == 0) return at;
  Matrix<Scalar> result = at.exp();
  return result;
}

/// Complex Schur form A = U T U^* with reordering so that the eigenvalues
/// selected by `take` occupy the leading diagonal positions.
template <typename Scalar>
struct OrderedSchur {
  ComplexMatrix<Scalar> t;
  ComplexMatrix<Scalar> u;
  Eigen::Index selected = 0;
};

template <typename Scalar, typename Predicate>
OrderedSchur<Scalar> ordered_schur(const Matrix<Scalar>& a, Predicate take) {
  using Complex = std::complex<Scalar>;
  detail::require_square(a, "ordered_schur");
  detail::require_finite(a, "ordered_schur");
  const Eigen::Index n = a.rows();
  OrderedSchur<Scalar> out;
  if (n == 0) {
    out.t.resize(0, 0);
    out.u.resize(0, 0);
    return out;
  }
  Eigen::ComplexSchur<ComplexMatrix<Scalar>> schur(a.template cast<Complex>());
  if (schur.info() != Eigen::Success) {
    throw NumericalError("ordered_schur: Schur iteration did not converge");
  }
  out.t = schur.matrixT();
  out.u = schur.matrixU();
  auto& t = out.t;
  auto& u = out.u;

  Eigen::Index target = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!take(t(j, j))) continue;
    // Bubble the selected eigenvalue up to position `target` with adjacent
    // unitary swaps.
    for (Eigen::Index k = j - 1; k >= target; --k) {
      const Complex t11 = t(k, k);
      const Complex t22 = t(k + 1, k + 1);
      Eigen::JacobiRotation<Complex> g;
      g.makeGivens(t(k, k + 1), t22 - t11);
      t.applyOnTheLeft(k, k + 1, g.adjoint());
      t.applyOnTheRight(k, k + 1, g);
      u.applyOnTheRight(k, k + 1, g);
      t(k, k) = t22;
      t(k + 1, k + 1) = t11;
      t(k + 1, k) = Complex(0);
    }
    ++target;
  }
  out.selected = target;
  return out;
}

/// Stabilizing solution X = U2 U1^{-1} of the Riccati equation associated
/// with a 2n x 2n Hamiltonian matrix, from its stable invariant subspace.
/// Throws NoStabilizingSolutionError on imaginary-axis eigenvalues or when
/// the stable subspace is not a graph subspace.
template <typename Scalar>
Matrix<Scalar> riccati_from_hamiltonian(const Matrix<Scalar>& h) {
  using Complex = std::complex<Scalar>;
  if (h.rows() != h.cols() || h.rows() % 2 != 0) {
    throw DimensionError("riccati_from_hamiltonian: expected 2n x 2n matrix");
  }
  const Eigen::Index n = h.rows() / 2;
  if (n == 0) return Matrix<Scalar>(0, 0);
  auto schur = ordered_schur<Scalar>(h, [](const Complex& z) {
    return z.real() < Scalar(0);
  });
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const Complex z = schur.t(i, i);
    if (std::abs(z.real()) <
        Scalar(kImaginaryAxisTol) * std::max(Scalar(1), std::abs(z))) {
      std::ostringstream os;
      os << "Hamiltonian eigenvalue " << z.real() << (z.imag() < 0 ? "" : "+")
         << z.imag() << "i lies on the imaginary axis";
      throw NoStabilizingSolutionError(os.str());
    }
  }
  if (schur.selected != n) {
    std::ostringstream os;
    os << "Hamiltonian has " << schur.selected << " stable eigenvalues, expected "
       << n;
    throw NoStabilizingSolutionError(os.str());
  }
  const ComplexMatrix<Scalar> u1 = schur.u.topLeftCorner(n, n);
  const ComplexMatrix<Scalar> u2 = schur.u.bottomLeftCorner(n, n);
  Eigen::PartialPivLU<ComplexMatrix<Scalar>> lu(u1);
  if (!(lu.rcond() > Scalar(1e-13))) {
    throw NoStabilizingSolutionError(
        "stable invariant subspace is not complementary to the imaginary "
        "axis subspace (U1 singular)");
  }
  // X U1 = U2  <=>  U1^T X^T = U2^T ; solve via the transposed system.
  ComplexMatrix<Scalar> xt = u1.transpose().partialPivLu().solve(u2.transpose());
  Matrix<Scalar> x = xt.transpose().real();
  x = Scalar(0.5) * (x + x.transpose()).eval();
  if (!x.allFinite()) {
    throw NoStabilizingSolutionError("Riccati solution is not finite");
  }
  return x;
}

/// Solves A X - X B + C = 0 by the Kronecker form. A and B must have
/// disjoint spectra.
template <typename Scalar>
Matrix<Scalar> solve_sylvester(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                               const Matrix<Scalar>& c) {
  detail::require_square(a, "solve_sylvester");
  detail::require_square(b, "solve_sylvester");
  const Eigen::Index m = a.rows(), n = b.rows();
  if (c.rows() != m || c.cols() != n) {
    throw DimensionError("solve_sylvester: C must be rows(A) x rows(B)");
  }
  if (m == 0 || n == 0) return Matrix<Scalar>::Zero(m, n);
  // vec(A X - X B) = (I kron A - B^T kron I) vec(X)
  Matrix<Scalar> k = Matrix<Scalar>::Zero(m * n, m * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k.block(j * m, j * m, m, m) += a;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (b(j, i) != Scalar(0)) {
        k.block(i * m, j * m, m, m).diagonal().array() -= b(j, i);
      }
    }
  }
  Eigen::PartialPivLU<Matrix<Scalar>> lu(k);
  if (!(lu.rcond() > std::numeric_limits<Scalar>::epsilon())) {
    throw SingularEquationError("solve_sylvester: spectra of A and B are not separated");
  }
  const Vector<Scalar> vecc = Eigen::Map<const Vector<Scalar>>(c.data(), m * n);
  const Vector<Scalar> x = lu.solve(-vecc);
  return Eigen::Map<const Matrix<Scalar>>(x.data(), m, n);
}

/// Solves A P + P A^T + Q = 0.
template <typename DerivedA, typename DerivedQ>
Matrix<typename DerivedA::Scalar> solve_lyapunov(
    const Eigen::MatrixBase<DerivedA>& a_in,
    const Eigen::MatrixBase<DerivedQ>& q_in) {
  using Scalar = typename DerivedA::Scalar;
  using Complex = std::complex<Scalar>;
  detail::require_square(a_in, "solve_lyapunov");
  detail::require_square(q_in, "solve_lyapunov");
  const Eigen::Index n = a_in.rows();
  if (q_in.rows() != n) {
    throw DimensionError("solve_lyapunov: A and Q sizes differ");
  }
  if (n == 0) return Matrix<Scalar>(0, 0);
  const Matrix<Scalar> a = a_in;
  const Matrix<Scalar> q = q_in;
  detail::require_finite(a, "solve_lyapunov");
  detail::require_finite(q, "solve_lyapunov");

  // Singularity of the Lyapunov operator: eigenvalues lambda_i + lambda_j.
  const ComplexVector<Scalar> lam = eigenvalues(a);
  const Scalar scale = std::max(Scalar(1), lam.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Complex s = lam(i) + lam(j);
      if (std::abs(s) < Scalar(1e-12) * scale) {
        std::ostringstream os;
        os << "solve_lyapunov: singular operator, eigenvalue sum lambda_" << i
           << " + lambda_" << j << " = " << s.real() << (s.imag() < 0 ? "" : "+")
           << s.imag() << "i";
        throw SingularEquationError(os.str());
      }
    }
  }

  Matrix<Scalar> p(n, n);
  if (n <= kKroneckerMaxStates) {
    // (I kron A + A kron I) vec(P) = -vec(Q), column-major vec.
    const Eigen::Index nn = n * n;
    Matrix<Scalar> k = Matrix<Scalar>::Zero(nn, nn);
    for (Eigen::Index col = 0; col < n; ++col) {
      k.block(col * n, col * n, n, n) += a;
      for (Eigen::Index row = 0; row < n; ++row) {
        k.block(row * n, col * n, n, n).diagonal().array() += a(row, col);
      }
    }
    const Vector<Scalar> rhs = -Eigen::Map<const Vector<Scalar>>(q.data(), nn);
    const Vector<Scalar> sol = k.partialPivLu().solve(rhs);
    p = Eigen::Map<const Matrix<Scalar>>(sol.data(), n, n);
  } else {
    // Bartels-Stewart on the complex Schur form: T Y + Y T^* = -U^* Q U.
    Eigen::ComplexSchur<ComplexMatrix<Scalar>> schur(a.template cast<Complex>());
    if (schur.info() != Eigen::Success) {
      throw NumericalError("solve_lyapunov: Schur iteration did not converge");
    }
    const ComplexMatrix<Scalar>& t = schur.matrixT();
    const ComplexMatrix<Scalar>& u = schur.matrixU();
    const ComplexMatrix<Scalar> f = -(u.adjoint() * q.template cast<Complex>() * u);
    ComplexMatrix<Scalar> y(n, n);
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      ComplexVector<Scalar> rhs = f.col(j);
      for (Eigen::Index k = j + 1; k < n; ++k) {
        rhs -= std::conj(t(j, k)) * y.col(k);
      }
      ComplexMatrix<Scalar> shifted = t;
      shifted.diagonal().array() += std::conj(t(j, j));
      y.col(j) =
          shifted.template triangularView<Eigen::Upper>().solve(rhs);
    }
    p = (u * y * u.adjoint()).real();
  }
  return Scalar(0.5) * (p + p.transpose());
}

template <typename Scalar>
Scalar care_residual(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                     const Matrix<Scalar>& q, const Matrix<Scalar>& r,
                     const Matrix<Scalar>& p) {
  const Matrix<Scalar> g = b * r.ldlt().solve(b.transpose());
  return (a.transpose() * p + p * a - p * g * p + q).norm();
}

/// Stabilizing solution of A^T P + P A - P B R^{-1} B^T P + Q = 0 from the
/// stable invariant subspace of the Hamiltonian, followed by a Newton
/// (Kleinman) refinement step when it reduces the residual.
template <typename DA, typename DB, typename DQ, typename DR>
Matrix<typename DA::Scalar> solve_care(const Eigen::MatrixBase<DA>& a_in,
                                       const Eigen::MatrixBase<DB>& b_in,
                                       const Eigen::MatrixBase<DQ>& q_in,
                                       const Eigen::MatrixBase<DR>& r_in) {
  using Scalar = typename DA::Scalar;
  detail::require_square(a_in, "solve_care");
  detail::require_square(q_in, "solve_care");
  detail::require_square(r_in, "solve_care");
  const Eigen::Index n = a_in.rows();
  if (b_in.rows() != n || q_in.rows() != n || r_in.rows() != b_in.cols()) {
    throw DimensionError("solve_care: inconsistent A, B, Q, R sizes");
  }
  const Matrix<Scalar> a = a_in, b = b_in, q = q_in, r = r_in;
  Eigen::LLT<Matrix<Scalar>> rllt(r);
  if (rllt.info() != Eigen::Success) {
    throw DimensionError("solve_care: R must be symmetric positive definite");
  }
  const Matrix<Scalar> g = b * rllt.solve(b.transpose());
  Matrix<Scalar> h(2 * n, 2 * n);
  h << a, -g, -q, -a.transpose();
  Matrix<Scalar> p = riccati_from_hamiltonian<Scalar>(h);

  Scalar res = care_residual(a, b, q, r, p);
  for (int it = 0; it < 2 && n > 0; ++it) {
    const Matrix<Scalar> ak = a - g * p;
    Matrix<Scalar> next;
    try {
      next = solve_lyapunov(ak.transpose(), q + p * g * p);
    } catch (const SingularEquationError&) {
      break;
    }
    const Scalar next_res = care_residual(a, b, q, r, next);
    if (!(next_res < res)) break;
    p = next;
    res = next_res;
  }
  return p;
}

/// Largest singular value of C (jw I - A)^{-1} B + D.
template <typename Scalar>
Scalar sigma_max_at(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                    const Matrix<Scalar>& c, const Matrix<Scalar>& d,
                    Scalar omega) {
  using Complex = std::complex<Scalar>;
  ComplexMatrix<Scalar> g = d.template cast<Complex>();
  if (a.rows() > 0) {
    ComplexMatrix<Scalar> m = -a.template cast<Complex>();
    m.diagonal().array() += Complex(0, omega);
    g += c.template cast<Complex>() *
         m.partialPivLu().solve(b.template cast<Complex>());
  }
  if (g.size() == 0) return Scalar(0);
  Eigen::JacobiSVD<ComplexMatrix<Scalar>> svd(g);
  return svd.singularValues()(0);
}

template <typename Scalar>
struct PeakGain {
  Scalar gain = Scalar(0);
  Scalar frequency = Scalar(0);
};

/// L-infinity norm of (A, B, C, D) and a frequency at which it is attained.
///
/// Level-set iteration on the gamma-parameterized Hamiltonian: at each test
/// level gamma the imaginary-axis eigenvalues mark the frequencies where gamma
/// is a singular value; the gain is re-evaluated between them to raise the
/// lower bound. Terminates once no imaginary-axis eigenvalue exists at
/// (1 + 2 tol) times the current lower bound, so the returned gain g satisfies
/// g <= ||G||_inf <= (1 + 2 tol) g.
template <typename Scalar>
PeakGain<Scalar> hinf_peak(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                           const Matrix<Scalar>& c, const Matrix<Scalar>& d,
                           Scalar tol = Scalar(1e-6)) {
  using Complex = std::complex<Scalar>;
  const Eigen::Index n = a.rows();
  const Eigen::Index m = d.cols();
  const Eigen::Index p = d.rows();
  PeakGain<Scalar> best;
  if (d.size() > 0) {
    best.gain = Eigen::JacobiSVD<Matrix<Scalar>>(d).singularValues()(0);
    best.frequency = std::numeric_limits<Scalar>::infinity();
  }
  if (n == 0 || m == 0 || p == 0) return best;

  const ComplexVector<Scalar> poles = eigenvalues(a);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(poles(i).real()) <=
        Scalar(1e-9) * std::max(Scalar(1), std::abs(poles(i)))) {
      std::ostringstream os;
      os << "hinf_norm: imaginary-axis pole " << poles(i).real() << "+"
         << poles(i).imag() << "i";
      throw NormUndefinedError(os.str());
    }
  }
  auto probe = [&](Scalar w) {
    const Scalar s = sigma_max_at(a, b, c, d, w);
    if (s > best.gain) {
      best.gain = s;
      best.frequency = w;
    }
  };
  probe(Scalar(0));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (poles(i).imag() > 0) probe(poles(i).imag());
  }
  if (!(best.gain > Scalar(0))) return best;

  const Matrix<Scalar> dt = d.transpose();
  for (int iter = 0; iter < 100; ++iter) {
    const Scalar gamma = (Scalar(1) + Scalar(2) * tol) * best.gain;
    Matrix<Scalar> r = -dt * d;
    r.diagonal().array() += gamma * gamma;
    Eigen::LDLT<Matrix<Scalar>> rl(r);
    const Matrix<Scalar> rinv_dtc = rl.solve(dt * c);
    const Matrix<Scalar> rinv_bt = rl.solve(b.transpose());
    const Matrix<Scalar> ah = a + b * rinv_dtc;
    Matrix<Scalar> h(2 * n, 2 * n);
    h.topLeftCorner(n, n) = ah;
    h.topRightCorner(n, n) = b * rinv_bt;
    Matrix<Scalar> mid = Matrix<Scalar>::Identity(p, p) + d * rl.solve(dt);
    h.bottomLeftCorner(n, n) = -c.transpose() * mid * c;
    h.bottomRightCorner(n, n) = -ah.transpose();
    const ComplexVector<Scalar> lam = eigenvalues(h);
    // Eigenvalue error grows with ||H||; extra candidates only cost probes.
    const Scalar axis_tol = Scalar(1e-10) * detail::norm1<Scalar>(h);
    std::vector<Scalar> freqs;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const Complex z = lam(i);
      if (z.imag() >= 0 &&
          std::abs(z.real()) <= std::max(Scalar(1e-8) * std::max(Scalar(1), std::abs(z)), axis_tol)) {
        freqs.push_back(z.imag());
      }
    }
    if (freqs.empty()) return best;
    std::sort(freqs.begin(), freqs.end());
    const Scalar before = best.gain;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      probe(freqs[i]);
      if (i + 1 < freqs.size()) probe(Scalar(0.5) * (freqs[i] + freqs[i + 1]));
    }
    if (freqs.size() == 1) probe(Scalar(0.5) * freqs[0]);
    if (!(best.gain > before * (Scalar(1) + tol))) return best;
  }
  return best;
}

/// L-infinity norm (equal to the H-infinity norm for stable systems) within
/// relative tolerance `tol`.
template <typename Scalar>
Scalar hinf_norm(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                 const Matrix<Scalar>& c, const Matrix<Scalar>& d,
                 Scalar tol = Scalar(1e-6)) {
  return hinf_peak(a, b, c, d, tol).gain;
}

}  // namespace retrofit::numerics
