#pragma once

// Continuous-time LTI state-space systems and their algebra.
//
// Sign convention: every feedback interconnection in this library is
// POSITIVE feedback. Closing a plant P with a controller K yields
// (I - P K)^{-1} P; a negative-feedback loop is obtained by negating K.

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/numerics.hpp"

namespace retrofit::lti {

using numerics::ComplexMatrix;
using numerics::Matrix;
using numerics::Vector;
using Index = Eigen::Index;

/// Real state-space quadruple (A, B, C, D). Immutable after construction.
template <typename Scalar>
class BasicStateSpace {
 public:
  using MatrixType = Matrix<Scalar>;

  /// Empty system: no states, no inputs, no outputs.
  BasicStateSpace() = default;

  BasicStateSpace(MatrixType a, MatrixType b, MatrixType c, MatrixType d)
      : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
    const Index n = a_.rows();
    if (a_.cols() != n || b_.rows() != n || c_.cols() != n ||
        d_.rows() != c_.rows() || d_.cols() != b_.cols()) {
      std::ostringstream os;
      os << "StateSpace: inconsistent dimensions A " << a_.rows() << "x"
         << a_.cols() << ", B " << b_.rows() << "x" << b_.cols() << ", C "
         << c_.rows() << "x" << c_.cols() << ", D " << d_.rows() << "x"
         << d_.cols();
      throw DimensionError(os.str());
    }
    if (!a_.allFinite() || !b_.allFinite() || !c_.allFinite() ||
        !d_.allFinite()) {
      throw NumericalError("StateSpace: non-finite entries");
    }
  }

  /// Static gain y = D u.
  static BasicStateSpace gain(const MatrixType& d) {
    return BasicStateSpace(MatrixType(0, 0), MatrixType(0, d.cols()),
                           MatrixType(d.rows(), 0), d);
  }

  static BasicStateSpace zero(Index outputs, Index inputs) {
    return gain(MatrixType::Zero(outputs, inputs));
  }

  const MatrixType& A() const { return a_; }
  const MatrixType& B() const { return b_; }
  const MatrixType& C() const { return c_; }
  const MatrixType& D() const { return d_; }

  Index states() const { return a_.rows(); }
  Index inputs() const { return d_.cols(); }
  Index outputs() const { return d_.rows(); }

 private:
  MatrixType a_ = MatrixType(0, 0);
  MatrixType b_ = MatrixType(0, 0);
  MatrixType c_ = MatrixType(0, 0);
  MatrixType d_ = MatrixType(0, 0);
};

using StateSpace = BasicStateSpace<double>;

/// A named, contiguous range of input columns or output rows.
struct ChannelGroup {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

/// Named input groups (column ranges of B, D) and output groups (row ranges
/// of C, D). Groups are laid out contiguously in declaration order.
class ChannelMap {
 public:
  ChannelMap() = default;

  ChannelMap(std::initializer_list<std::pair<std::string, Index>> inputs,
             std::initializer_list<std::pair<std::string, Index>> outputs) {
    for (const auto& [name, size] : inputs) add_input(name, size);
    for (const auto& [name, size] : outputs) add_output(name, size);
  }

  ChannelMap& add_input(const std::string& name, Index size) {
    push(inputs_, name, size, "input");
    return *this;
  }
  ChannelMap& add_output(const std::string& name, Index size) {
    push(outputs_, name, size, "output");
    return *this;
  }

  const ChannelGroup& input(const std::string& name) const {
    return find(inputs_, name, "input");
  }
  const ChannelGroup& output(const std::string& name) const {
    return find(outputs_, name, "output");
  }
  bool has_input(const std::string& name) const {
    return std::any_of(inputs_.begin(), inputs_.end(),
                       [&](const ChannelGroup& g) { return g.name == name; });
  }
  bool has_output(const std::string& name) const {
    return std::any_of(outputs_.begin(), outputs_.end(),
                       [&](const ChannelGroup& g) { return g.name == name; });
  }

  const std::vector<ChannelGroup>& inputs() const { return inputs_; }
  const std::vector<ChannelGroup>& outputs() const { return outputs_; }

  Index input_count() const { return total(inputs_); }
  Index output_count() const { return total(outputs_); }

  /// Column indices of the named input groups, concatenated in order.
  std::vector<Index> input_indices(const std::vector<std::string>& names) const {
    return indices(names, [this](const std::string& n) { return input(n); });
  }
  std::vector<Index> output_indices(const std::vector<std::string>& names) const {
    return indices(names, [this](const std::string& n) { return output(n); });
  }

  /// Throws unless the groups exactly cover the system's inputs and outputs.
  template <typename Scalar>
  void validate(const BasicStateSpace<Scalar>& sys) const {
    if (input_count() != sys.inputs() || output_count() != sys.outputs()) {
      std::ostringstream os;
      os << "ChannelMap covers " << input_count() << " inputs / "
         << output_count() << " outputs, system has " << sys.inputs() << " / "
         << sys.outputs();
      throw DimensionError(os.str());
    }
  }

 private:
  static void push(std::vector<ChannelGroup>& groups, const std::string& name,
                   Index size, const char* kind) {
    if (size < 0) throw DimensionError("ChannelMap: negative group size");
    for (const auto& g : groups) {
      if (g.name == name) {
        throw DimensionError(std::string("ChannelMap: duplicate ") + kind +
                             " group '" + name + "'");
      }
    }
    groups.push_back({name, total(groups), size});
  }
  static const ChannelGroup& find(const std::vector<ChannelGroup>& groups,
                                  const std::string& name, const char* kind) {
    for (const auto& g : groups) {
      if (g.name == name) return g;
    }
    throw LookupError(std::string("unknown ") + kind + " group '" + name + "'");
  }
  static Index total(const std::vector<ChannelGroup>& groups) {
    Index n = 0;
    for (const auto& g : groups) n += g.size;
    return n;
  }
  template <typename Lookup>
  static std::vector<Index> indices(const std::vector<std::string>& names,
                                    Lookup lookup) {
    std::vector<Index> idx;
    for (const auto& name : names) {
      const ChannelGroup& g = lookup(name);
      for (Index k = 0; k < g.size; ++k) idx.push_back(g.offset + k);
    }
    return idx;
  }

  std::vector<ChannelGroup> inputs_;
  std::vector<ChannelGroup> outputs_;
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> take_cols(const Matrix<Scalar>& m, const std::vector<Index>& idx) {
  Matrix<Scalar> out(m.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(k) = m.col(idx[k]);
  return out;
}

template <typename Scalar>
Matrix<Scalar> take_rows(const Matrix<Scalar>& m, const std::vector<Index>& idx) {
  Matrix<Scalar> out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(k) = m.row(idx[k]);
  return out;
}

template <typename Scalar>
Matrix<Scalar> block_diag(const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows() + y.rows(), x.cols() + y.cols());
  out.topLeftCorner(x.rows(), x.cols()) = x;
  out.bottomRightCorner(y.rows(), y.cols()) = y;
  return out;
}

inline void check_indices(const std::vector<Index>& idx, Index bound,
                          const char* what) {
  for (Index i : idx) {
    if (i < 0 || i >= bound) {
      throw DimensionError(std::string(what) + ": channel index out of range");
    }
  }
}

}  // namespace detail

/// Subsystem with inputs `in_idx` and outputs `out_idx` (A unchanged).
template <typename Scalar>
BasicStateSpace<Scalar> select(const BasicStateSpace<Scalar>& sys,
                               const std::vector<Index>& in_idx,
                               const std::vector<Index>& out_idx) {
  detail::check_indices(in_idx, sys.inputs(), "select");
  detail::check_indices(out_idx, sys.outputs(), "select");
  return BasicStateSpace<Scalar>(
      sys.A(), detail::take_cols(sys.B(), in_idx),
      detail::take_rows(sys.C(), out_idx),
      detail::take_rows(detail::take_cols(sys.D(), in_idx), out_idx));
}

/// Subsystem from the named input groups to the named output groups.
template <typename Scalar>
BasicStateSpace<Scalar> select_channels(const BasicStateSpace<Scalar>& sys,
                                        const ChannelMap& cmap,
                                        const std::vector<std::string>& ins,
                                        const std::vector<std::string>& outs) {
  cmap.validate(sys);
  return select(sys, cmap.input_indices(ins), cmap.output_indices(outs));
}

/// g2 after g1: transfer G2(s) G1(s).
template <typename Scalar>
BasicStateSpace<Scalar> series(const BasicStateSpace<Scalar>& g1,
                               const BasicStateSpace<Scalar>& g2) {
  if (g1.outputs() != g2.inputs()) {
    std::ostringstream os;
    os << "series: g1 has " << g1.outputs() << " outputs, g2 has "
       << g2.inputs() << " inputs";
    throw DimensionError(os.str());
  }
  const Index n1 = g1.states(), n2 = g2.states();
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n1 + n2, n1 + n2);
  a.topLeftCorner(n1, n1) = g1.A();
  a.bottomLeftCorner(n2, n1) = g2.B() * g1.C();
  a.bottomRightCorner(n2, n2) = g2.A();
  Matrix<Scalar> b(n1 + n2, g1.inputs());
  b << g1.B(), g2.B() * g1.D();
  Matrix<Scalar> c(g2.outputs(), n1 + n2);
  c << g2.D() * g1.C(), g2.C();
  return BasicStateSpace<Scalar>(a, b, c, g2.D() * g1.D());
}

/// G1(s) + G2(s) on shared inputs.
template <typename Scalar>
BasicStateSpace<Scalar> parallel(const BasicStateSpace<Scalar>& g1,
                                 const BasicStateSpace<Scalar>& g2) {
  if (g1.inputs() != g2.inputs() || g1.outputs() != g2.outputs()) {
    throw DimensionError("parallel: operand I/O dimensions differ");
  }
  Matrix<Scalar> b(g1.states() + g2.states(), g1.inputs());
  b << g1.B(), g2.B();
  Matrix<Scalar> c(g1.outputs(), g1.states() + g2.states());
  c << g1.C(), g2.C();
  return BasicStateSpace<Scalar>(detail::block_diag(g1.A(), g2.A()), b, c,
                                 g1.D() + g2.D());
}

template <typename Scalar>
BasicStateSpace<Scalar> negate(const BasicStateSpace<Scalar>& g) {
  return BasicStateSpace<Scalar>(g.A(), g.B(), -g.C(), -g.D());
}

/// G1 - G2.
template <typename Scalar>
BasicStateSpace<Scalar> difference(const BasicStateSpace<Scalar>& g1,
                                   const BasicStateSpace<Scalar>& g2) {
  return parallel(g1, negate(g2));
}

/// Block-diagonal stacking: inputs (u1, u2), outputs (y1, y2).
template <typename Scalar>
BasicStateSpace<Scalar> append(const BasicStateSpace<Scalar>& g1,
                               const BasicStateSpace<Scalar>& g2) {
  return BasicStateSpace<Scalar>(
      detail::block_diag(g1.A(), g2.A()), detail::block_diag(g1.B(), g2.B()),
      detail::block_diag(g1.C(), g2.C()), detail::block_diag(g1.D(), g2.D()));
}

/// Partial positive-feedback interconnection. `ctrl` reads the plant outputs
/// `meas_idx` and its output is added to the plant inputs `act_idx`. Every
/// plant input stays an external input and every plant output stays an
/// output; the state is (plant state, controller state).
template <typename Scalar>
BasicStateSpace<Scalar> interconnect(const BasicStateSpace<Scalar>& plant,
                                     const BasicStateSpace<Scalar>& ctrl,
                                     const std::vector<Index>& act_idx,
                                     const std::vector<Index>& meas_idx,
                                     Scalar sign = Scalar(1)) {
  detail::check_indices(act_idx, plant.inputs(), "interconnect");
  detail::check_indices(meas_idx, plant.outputs(), "interconnect");
  if (ctrl.inputs() != static_cast<Index>(meas_idx.size()) ||
      ctrl.outputs() != static_cast<Index>(act_idx.size())) {
    std::ostringstream os;
    os << "interconnect: controller is " << ctrl.outputs() << "x"
       << ctrl.inputs() << ", loop needs " << act_idx.size() << "x"
       << meas_idx.size();
    throw DimensionError(os.str());
  }
  const Index n1 = plant.states(), n2 = ctrl.states();
  const Index m = plant.inputs(), p = plant.outputs();
  const Index mk = ctrl.outputs(), pk = ctrl.inputs();

  // Injection of controller output into plant inputs.
  Matrix<Scalar> inj = Matrix<Scalar>::Zero(m, mk);
  for (Index k = 0; k < mk; ++k) inj(act_idx[k], k) = sign;
  const Matrix<Scalar> c1o = detail::take_rows(plant.C(), meas_idx);
  const Matrix<Scalar> d1o = detail::take_rows(plant.D(), meas_idx);

  // y_O = c1o x1 + d1o (r + inj (C2 x2 + D2 y_O))
  Matrix<Scalar> loop = Matrix<Scalar>::Identity(pk, pk) - d1o * inj * ctrl.D();
  Eigen::FullPivLU<Matrix<Scalar>> lu(loop);
  if (pk > 0 && (!lu.isInvertible() || lu.rcond() < Scalar(1e-12))) {
    throw IllPosedLoopError("interconnect: I - D_plant D_ctrl is singular");
  }
  // y_O = E [c1o, d1o inj C2] [x1; x2] + E d1o r
  const Matrix<Scalar> e = pk > 0 ? lu.inverse() : Matrix<Scalar>(0, 0);
  Matrix<Scalar> yo_x(pk, n1 + n2);
  yo_x << c1o, d1o * inj * ctrl.C();
  yo_x = (e * yo_x).eval();
  const Matrix<Scalar> yo_r = e * d1o;

  // Plant input u = r + inj (C2 x2 + D2 y_O).
  Matrix<Scalar> u_x(m, n1 + n2);
  u_x << Matrix<Scalar>::Zero(m, n1), inj * ctrl.C();
  u_x += inj * ctrl.D() * yo_x;
  Matrix<Scalar> u_r = Matrix<Scalar>::Identity(m, m) + inj * ctrl.D() * yo_r;

  Matrix<Scalar> a(n1 + n2, n1 + n2);
  a.topRows(n1) = plant.B() * u_x;
  a.topLeftCorner(n1, n1) += plant.A();
  a.bottomRows(n2) = ctrl.B() * yo_x;
  a.bottomRightCorner(n2, n2) += ctrl.A();
  Matrix<Scalar> b(n1 + n2, m);
  b.topRows(n1) = plant.B() * u_r;
  b.bottomRows(n2) = ctrl.B() * yo_r;
  Matrix<Scalar> c(p, n1 + n2);
  c << plant.C(), Matrix<Scalar>::Zero(p, n2);
  c += plant.D() * u_x;
  const Matrix<Scalar> d = plant.D() * u_r;
  return BasicStateSpace<Scalar>(a, b, c, d);
}

/// Positive-feedback closed loop of `plant` with `ctrl` over all channels:
/// u = ctrl(y) + r. Transfer (I - P K)^{-1} P from r to y.
template <typename Scalar>
BasicStateSpace<Scalar> feedback(const BasicStateSpace<Scalar>& plant,
                                 const BasicStateSpace<Scalar>& ctrl,
                                 Scalar sign = Scalar(1)) {
  std::vector<Index> act(plant.inputs()), meas(plant.outputs());
  for (Index i = 0; i < plant.inputs(); ++i) act[i] = i;
  for (Index i = 0; i < plant.outputs(); ++i) meas[i] = i;
  return interconnect(plant, ctrl, act, meas, sign);
}

/// C (jw I - A)^{-1} B + D.
template <typename Scalar>
ComplexMatrix<Scalar> freq_response(const BasicStateSpace<Scalar>& sys,
                                    Scalar omega) {
  using Complex = std::complex<Scalar>;
  ComplexMatrix<Scalar> g = sys.D().template cast<Complex>();
  if (sys.states() == 0) return g;
  ComplexMatrix<Scalar> m = -sys.A().template cast<Complex>();
  m.diagonal().array() += Complex(0, omega);
  Eigen::PartialPivLU<ComplexMatrix<Scalar>> lu(m);
  if (!(lu.rcond() > Scalar(1e-14))) {
    std::ostringstream os;
    os << "freq_response: jw I - A is singular at w = " << omega;
    throw PoleAtFrequencyError(os.str());
  }
  g += sys.C().template cast<Complex>() * lu.solve(sys.B().template cast<Complex>());
  return g;
}

/// Logarithmically spaced frequencies in [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> w(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double f = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    w[static_cast<std::size_t>(k)] =
        std::pow(10.0, std::log10(lo) + f * (std::log10(hi) - std::log10(lo)));
  }
  return w;
}

/// The default analysis grid: 200 points log-spaced on [1e-3, 1e3] rad/s.
inline std::vector<double> default_grid() { return log_grid(1e-3, 1e3, 200); }

/// Max over `grid` of the largest singular value of the frequency response.
template <typename Scalar>
Scalar grid_peak(const BasicStateSpace<Scalar>& sys,
                 const std::vector<Scalar>& grid) {
  Scalar peak = 0;
  for (Scalar w : grid) {
    const ComplexMatrix<Scalar> g = freq_response(sys, w);
    if (g.size() == 0) continue;
    peak = std::max(peak, Eigen::JacobiSVD<ComplexMatrix<Scalar>>(g).singularValues()(0));
  }
  return peak;
}

/// H-infinity (L-infinity) norm. The realization must have no imaginary-axis
/// poles; run minreal first when hidden marginal modes may be present.
template <typename Scalar>
Scalar hinf_norm(const BasicStateSpace<Scalar>& sys, Scalar tol = Scalar(1e-6)) {
  return numerics::hinf_norm<Scalar>(sys.A(), sys.B(), sys.C(), sys.D(), tol);
}

/// Zero-order-hold discretization: (A_d, B_d) from the augmented exponential.
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> discretize_zoh(
    const BasicStateSpace<Scalar>& sys, Scalar dt) {
  const Index n = sys.states(), m = sys.inputs();
  Matrix<Scalar> aug = Matrix<Scalar>::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = sys.A();
  aug.topRightCorner(n, m) = sys.B();
  const Matrix<Scalar> e = numerics::expm(aug, dt);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

/// Sampled response to a piecewise-constant input. `input` holds one column
/// per sample (inputs x samples); returns outputs x samples, y_k = y(k dt).
template <typename Scalar>
Matrix<Scalar> simulate(const BasicStateSpace<Scalar>& sys,
                        const Matrix<Scalar>& input, Scalar dt,
                        const Vector<Scalar>& x0) {
  if (!(dt > 0)) throw DimensionError("simulate: dt must be positive");
  if (input.rows() != sys.inputs() || input.cols() < 1) {
    throw DimensionError("simulate: input must be inputs x samples, samples >= 1");
  }
  if (x0.size() != sys.states()) {
    throw DimensionError("simulate: initial state has wrong size");
  }
  const auto [ad, bd] = discretize_zoh(sys, dt);
  Matrix<Scalar> y(sys.outputs(), input.cols());
  Vector<Scalar> x = x0;
  for (Index k = 0; k < input.cols(); ++k) {
    y.col(k) = sys.C() * x + sys.D() * input.col(k);
    x = (ad * x + bd * input.col(k)).eval();
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> simulate(const BasicStateSpace<Scalar>& sys,
                        const Matrix<Scalar>& input, Scalar dt) {
  const Vector<Scalar> x0 = Vector<Scalar>::Zero(sys.states());
  return simulate(sys, input, dt, x0);
}

/// Unit-impulse response of input `channel` sampled at t_k = k dt.
/// The state part is exact (x(0+) = B e); the D term appears as a pulse of
/// height 1/dt in the first sample.
template <typename Scalar>
Matrix<Scalar> impulse_response(const BasicStateSpace<Scalar>& sys, Index channel,
                                Scalar dt, Index samples) {
  if (channel < 0 || channel >= sys.inputs()) {
    throw DimensionError("impulse_response: channel out of range");
  }
  if (!(dt > 0) || samples < 1) {
    throw DimensionError("impulse_response: need dt > 0 and samples >= 1");
  }
  const Matrix<Scalar> ad = numerics::expm(sys.A(), dt);
  Matrix<Scalar> y(sys.outputs(), samples);
  Vector<Scalar> x = sys.B().col(channel);
  for (Index k = 0; k < samples; ++k) {
    y.col(k) = sys.C() * x;
    x = (ad * x).eval();
  }
  y.col(0) += sys.D().col(channel) / dt;
  return y;
}

namespace detail {

/// Orthogonal controllability staircase. Returns (T, nc): T orthogonal with
/// T^T A T block upper Hessenberg and the leading nc coordinates spanning
/// the controllable subspace. Rank decisions use `threshold`.
template <typename Scalar>
std::pair<Matrix<Scalar>, Index> controllability_staircase(
    const Matrix<Scalar>& a_in, const Matrix<Scalar>& b, Scalar threshold) {
  const Index n = a_in.rows();
  Matrix<Scalar> a = a_in;
  Matrix<Scalar> t = Matrix<Scalar>::Identity(n, n);
  Index nc = 0;
  Matrix<Scalar> block = b;
  while (nc < n && block.cols() > 0) {
    Eigen::JacobiSVD<Matrix<Scalar>> svd(block, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > threshold) ++rank;
    }
    if (rank == 0) break;
    const Matrix<Scalar> u = svd.matrixU();
    const Index rest = n - nc;
    // Rotate the trailing coordinates so the block becomes [R; 0].
    a.bottomRows(rest) = (u.transpose() * a.bottomRows(rest)).eval();
    a.rightCols(rest) = (a.rightCols(rest) * u).eval();
    t.rightCols(rest) = (t.rightCols(rest) * u).eval();
    block = a.block(nc + rank, nc, rest - rank, rank);
    nc += rank;
  }
  return {t, nc};
}

}  // namespace detail

template <typename Scalar>
Scalar system_scale(const BasicStateSpace<Scalar>& sys) {
  return std::max({Scalar(1e-300), sys.A().norm(), sys.B().norm(), sys.C().norm()});
}

/// Removes the uncontrollable part of the realization.
template <typename Scalar>
BasicStateSpace<Scalar> controllable_part(const BasicStateSpace<Scalar>& sys,
                                          Scalar tol = Scalar(1e-8)) {
  const Index n = sys.states();
  if (n == 0) return sys;
  const Scalar threshold =
      tol * std::max(sys.A().norm(), sys.B().norm());
  const auto [t, nc] = detail::controllability_staircase(sys.A(), sys.B(), threshold);
  const Matrix<Scalar> tc = t.leftCols(nc);
  return BasicStateSpace<Scalar>(tc.transpose() * sys.A() * tc,
                                 tc.transpose() * sys.B(), sys.C() * tc, sys.D());
}

template <typename Scalar>
BasicStateSpace<Scalar> observable_part(const BasicStateSpace<Scalar>& sys,
                                        Scalar tol = Scalar(1e-8)) {
  const BasicStateSpace<Scalar> dual(sys.A().transpose(), sys.C().transpose(),
                                     sys.B().transpose(), sys.D().transpose());
  const auto red = controllable_part(dual, tol);
  return BasicStateSpace<Scalar>(red.A().transpose(), red.C().transpose(),
                                 red.B().transpose(), red.D().transpose());
}

/// Minimal realization by controllability then observability staircase
/// reduction. Rank tolerance: tol times the norm of the staircase data
/// ([A, B] for the controllability pass, [A^T, C^T] for the dual pass).
template <typename Scalar>
BasicStateSpace<Scalar> minreal(const BasicStateSpace<Scalar>& sys,
                                Scalar tol = Scalar(1e-8)) {
  return observable_part(controllable_part(sys, tol), tol);
}

/// Additive split G = stable + marginal by a block-diagonalizing real
/// similarity. `marginal` collects the eigenvalues with real part > -margin
/// and carries no feedthrough.
template <typename Scalar>
struct MarginalSplit {
  BasicStateSpace<Scalar> stable;
  BasicStateSpace<Scalar> marginal;
};

template <typename Scalar>
MarginalSplit<Scalar> split_marginal(const BasicStateSpace<Scalar>& sys,
                                     Scalar margin = Scalar(1e-6)) {
  using Complex = std::complex<Scalar>;
  const Index n = sys.states();
  const auto schur = numerics::ordered_schur<Scalar>(
      sys.A(), [margin](const Complex& z) { return z.real() > -margin; });
  const Index nm = schur.selected;
  if (nm == 0) {
    return {sys, BasicStateSpace<Scalar>::zero(sys.outputs(), sys.inputs())};
  }
  // Real orthonormal basis of the (conjugation-closed) marginal subspace,
  // completed to an orthogonal Q.
  Matrix<Scalar> span(n, 2 * nm);
  span << schur.u.leftCols(nm).real(), schur.u.leftCols(nm).imag();
  Eigen::JacobiSVD<Matrix<Scalar>> svd(span, Eigen::ComputeThinU);
  const Matrix<Scalar> q1 = svd.matrixU().leftCols(nm);
  Eigen::HouseholderQR<Matrix<Scalar>> qr(q1);
  const Matrix<Scalar> q = qr.householderQ();
  const Matrix<Scalar> t = q.transpose() * sys.A() * q;
  const Index ns = n - nm;
  const Matrix<Scalar> a11 = t.topLeftCorner(nm, nm), a12 = t.topRightCorner(nm, ns);
  const Matrix<Scalar> a22 = t.bottomRightCorner(ns, ns);
  // [I Y; 0 I] removes the coupling: A11 Y - Y A22 + A12 = 0.
  const Matrix<Scalar> y = numerics::solve_sylvester<Scalar>(a11, a22, a12);
  const Matrix<Scalar> bq = q.transpose() * sys.B();
  const Matrix<Scalar> cq = sys.C() * q;
  const Matrix<Scalar> b1 = bq.topRows(nm) - y * bq.bottomRows(ns);
  const Matrix<Scalar> c2 = cq.leftCols(nm) * y + cq.rightCols(ns);
  return {BasicStateSpace<Scalar>(a22, bq.bottomRows(ns), c2, sys.D()),
          BasicStateSpace<Scalar>(a11, b1, cq.leftCols(nm),
                                  Matrix<Scalar>::Zero(sys.outputs(), sys.inputs()))};
}

/// True if every Markov parameter C A^k B (k < states) of a strictly proper
/// system is below tol * scale * max(1, ||A||)^k.
template <typename Scalar>
bool negligible_transfer(const BasicStateSpace<Scalar>& sys, Scalar tol, Scalar scale) {
  const Scalar an = std::max(Scalar(1), sys.A().norm());
  Matrix<Scalar> ak_b = sys.B();
  Scalar grow = 1;
  for (Index k = 0; k < sys.states(); ++k) {
    if ((sys.C() * ak_b).norm() > tol * scale * grow) return false;
    ak_b = (sys.A() * ak_b).eval();
    grow *= an;
  }
  return true;
}

/// Stable part of a system whose marginal modes are hidden: their combined
/// transfer is negligible relative to ||C|| ||B||. Throws NormUndefinedError
/// otherwise.
template <typename Scalar>
BasicStateSpace<Scalar> remove_hidden_marginal(const BasicStateSpace<Scalar>& sys,
                                               Scalar tol = Scalar(1e-8),
                                               Scalar margin = Scalar(1e-6)) {
  const MarginalSplit<Scalar> split = split_marginal(sys, margin);
  if (!negligible_transfer(split.marginal, tol, sys.C().norm() * sys.B().norm())) {
    std::ostringstream os;
    os << "remove_hidden_marginal: " << split.marginal.states()
       << " marginal modes reach the output";
    throw NormUndefinedError(os.str());
  }
  return split.stable;
}

/// PBH test: is the mode at eigenvalue `lambda` unobservable from `c`?
template <typename Scalar>
bool mode_unobservable(const Matrix<Scalar>& a, const Matrix<Scalar>& c,
                       std::complex<Scalar> lambda, Scalar tol) {
  using Complex = std::complex<Scalar>;
  const Index n = a.rows();
  if (c.rows() == 0) return true;
  ComplexMatrix<Scalar> m(n + c.rows(), n);
  m.topRows(n) = -a.template cast<Complex>();
  m.topRows(n).diagonal().array() += lambda;
  m.bottomRows(c.rows()) = c.template cast<Complex>();
  Eigen::JacobiSVD<ComplexMatrix<Scalar>> svd(m);
  const Scalar scale = std::max({Scalar(1), a.norm(), c.norm()});
  return svd.singularValues()(n - 1) <= tol * scale;
}

/// Spectral abscissa over the modes that are visible at `c`. Eigenvalues with
/// real part above -`margin` are dropped when the PBH test finds them
/// unobservable from `c`; all other eigenvalues count.
template <typename Scalar>
Scalar deflated_abscissa(const Matrix<Scalar>& a, const Matrix<Scalar>& c,
                         Scalar tol = Scalar(1e-8), Scalar margin = Scalar(1e-6)) {
  if (a.rows() == 0) return -std::numeric_limits<Scalar>::infinity();
  const auto lam = numerics::eigenvalues(a);
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < lam.size(); ++i) {
    if (lam(i).real() > -margin && mode_unobservable(a, c, lam(i), tol)) continue;
    worst = std::max(worst, lam(i).real());
  }
  return worst;
}

}  // namespace retrofit::lti
