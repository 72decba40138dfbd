#pragma once

// Gramians and square-root balanced truncation.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/lti.hpp"
#include "retrofit/numerics.hpp"

namespace retrofit::reduction {

using lti::BasicStateSpace;
using numerics::Matrix;
using numerics::Vector;
using Index = Eigen::Index;

/// Hankel values below this fraction of the largest one are discarded.
inline constexpr double kHankelCutoff = 1e-12;

template <typename Scalar>
struct Gramians {
  Matrix<Scalar> wc;
  Matrix<Scalar> wo;
};

template <typename Scalar>
struct BalancedReduction {
  BasicStateSpace<Scalar> reduced;
  /// All Hankel singular values of the input system, descending.
  Vector<Scalar> hankel_values;
  /// Twice the sum of the discarded Hankel values.
  Scalar error_bound = Scalar(0);
};

namespace detail {

template <typename Scalar>
void require_stable(const BasicStateSpace<Scalar>& sys, const char* what) {
  if (sys.states() == 0) return;
  const Scalar abscissa = numerics::spectral_abscissa(sys.A());
  if (!(abscissa < 0)) {
    std::ostringstream os;
    os << what << ": system is not strictly stable (spectral abscissa "
       << abscissa << ")";
    throw StabilityPreconditionError(os.str());
  }
}

/// Factor L with W = L L^T for symmetric PSD W.
template <typename Scalar>
Matrix<Scalar> psd_factor(const Matrix<Scalar>& w) {
  Eigen::LLT<Matrix<Scalar>> llt(w);
  if (llt.info() == Eigen::Success) {
    const Matrix<Scalar> l = llt.matrixL();
    if (l.allFinite() && l.diagonal().minCoeff() > 0) return l;
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(w);
  const Vector<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

}  // namespace detail

/// Controllability and observability Gramians of a strictly stable system:
/// A Wc + Wc A^T + B B^T = 0 and A^T Wo + Wo A + C^T C = 0.
template <typename Scalar>
Gramians<Scalar> gramians(const BasicStateSpace<Scalar>& sys) {
  detail::require_stable(sys, "gramians");
  if (sys.states() == 0) return {Matrix<Scalar>(0, 0), Matrix<Scalar>(0, 0)};
  return {numerics::solve_lyapunov(sys.A(), sys.B() * sys.B().transpose()),
          numerics::solve_lyapunov(sys.A().transpose(),
                                   sys.C().transpose() * sys.C())};
}

/// Balanced truncation to at most `r` states by the square-root method.
/// Fewer than `r` states are kept when the system has fewer significant
/// Hankel values; `r = 0` returns the static D-only system.
template <typename Scalar>
BalancedReduction<Scalar> balanced_truncate(const BasicStateSpace<Scalar>& sys,
                                            Index r) {
  const Index n = sys.states();
  if (r < 0 || r > n) {
    std::ostringstream os;
    os << "balanced_truncate: order " << r << " outside [0, " << n << "]";
    throw DimensionError(os.str());
  }
  const Gramians<Scalar> g = gramians(sys);
  BalancedReduction<Scalar> out;
  if (n == 0) {
    out.reduced = sys;
    out.hankel_values = Vector<Scalar>(0);
    return out;
  }

  const Matrix<Scalar> lc = detail::psd_factor(g.wc);
  const Matrix<Scalar> m = lc.transpose() * g.wo * lc;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(Scalar(0.5) * (m + m.transpose()));
  // Eigenvalues come ascending; flip to descending.
  const Vector<Scalar> sigma2 = es.eigenvalues().reverse().cwiseMax(Scalar(0));
  const Matrix<Scalar> v = es.eigenvectors().rowwise().reverse();
  out.hankel_values = sigma2.cwiseSqrt();

  const Scalar smax = out.hankel_values.size() > 0 ? out.hankel_values(0) : Scalar(0);
  Index significant = 0;
  while (significant < n && out.hankel_values(significant) > Scalar(kHankelCutoff) * smax) {
    ++significant;
  }
  const Index keep = std::min(r, significant);
  out.error_bound = Scalar(2) * out.hankel_values.tail(n - keep).sum();

  if (keep == 0) {
    out.reduced = BasicStateSpace<Scalar>::gain(sys.D());
    return out;
  }
  const Vector<Scalar> s = out.hankel_values.head(keep);
  const Matrix<Scalar> vr = v.leftCols(keep);
  const Matrix<Scalar> t = lc * vr * s.cwiseSqrt().cwiseInverse().asDiagonal();
  const Matrix<Scalar> tinv = s.array().pow(Scalar(-1.5)).matrix().asDiagonal() *
                              vr.transpose() * lc.transpose() * g.wo;
  out.reduced = BasicStateSpace<Scalar>(tinv * sys.A() * t, tinv * sys.B(),
                                        sys.C() * t, sys.D());
  return out;
}

}  // namespace retrofit::reduction
