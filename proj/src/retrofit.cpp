#include "retrofit/retrofit.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include "retrofit/errors.hpp"

namespace retrofit {

namespace {

std::vector<Index> range(Index offset, Index size) {
  std::vector<Index> idx(static_cast<std::size_t>(size));
  std::iota(idx.begin(), idx.end(), offset);
  return idx;
}

ChannelMap partitioned_map(Index nv, Index nd, Index nu, Index nw, Index nz, Index ny) {
  ChannelMap cmap;
  cmap.add_input("v", nv).add_input("d", nd).add_input("u", nu);
  cmap.add_output("w", nw).add_output("z", nz).add_output("y", ny);
  return cmap;
}

/// G with outputs (w, z, y, vm), where vm = v is the applied interconnection
/// input. The extra group lets controllers read v after env is attached.
StateSpace with_measured_v(const PartitionedPlant& g) {
  const StateSpace& s = g.sys();
  const Index p = s.outputs(), m = s.inputs(), nv = g.nv();
  MatrixXd c(p + nv, s.states());
  c << s.C(), MatrixXd::Zero(nv, s.states());
  MatrixXd d = MatrixXd::Zero(p + nv, m);
  d.topRows(p) = s.D();
  d.bottomLeftCorner(nv, nv).setIdentity();
  return StateSpace(s.A(), s.B(), c, d);
}

std::vector<Index> rows_of(const PartitionedPlant& g, const std::string& name) {
  const auto& grp = g.channels().output(name);
  return range(grp.offset, grp.size);
}
std::vector<Index> cols_of(const PartitionedPlant& g, const std::string& name) {
  const auto& grp = g.channels().input(name);
  return range(grp.offset, grp.size);
}

std::vector<Index> concat(std::vector<Index> a, const std::vector<Index>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// G closed with env over (v, w); all groups of G remain, state (x, env).
StateSpace close_environment(const StateSpace& g_sys, const PartitionedPlant& g,
                             const EnvironmentModel& env) {
  return lti::interconnect(g_sys, env.sys(), cols_of(g, "v"), rows_of(g, "w"));
}

/// Rows of `closed`'s output matrix belonging to the z group of G.
MatrixXd z_rows_of(const StateSpace& closed, const PartitionedPlant& g) {
  const auto& grp = g.channels().output("z");
  return closed.C().middleRows(grp.offset, grp.size);
}

}  // namespace

PartitionedPlant::PartitionedPlant(StateSpace sys, ChannelMap cmap)
    : sys_(std::move(sys)), cmap_(std::move(cmap)) {
  cmap_.validate(sys_);
  const char* ins[] = {"v", "d", "u"};
  const char* outs[] = {"w", "z", "y"};
  for (int k = 0; k < 3; ++k) {
    if (cmap_.inputs().size() != 3 || cmap_.inputs()[k].name != ins[k] ||
        cmap_.outputs().size() != 3 || cmap_.outputs()[k].name != outs[k]) {
      throw DimensionError(
          "PartitionedPlant: channel map must list inputs (v, d, u) and outputs (w, z, y)");
    }
  }
  if (!sys_.D().isZero(0)) {
    throw DimensionError("PartitionedPlant: subsystem must be strictly proper (D = 0)");
  }
}

PartitionedPlant PartitionedPlant::from_blocks(const MatrixXd& a, const MatrixXd& l,
                                               const MatrixXd& w, const MatrixXd& b,
                                               const MatrixXd& gamma, const MatrixXd& s,
                                               const MatrixXd& c) {
  const Index n = a.rows();
  if (l.rows() != n || w.rows() != n || b.rows() != n || gamma.cols() != n ||
      s.cols() != n || c.cols() != n) {
    throw DimensionError("PartitionedPlant::from_blocks: block sizes disagree with A");
  }
  MatrixXd bb(n, l.cols() + w.cols() + b.cols());
  bb << l, w, b;
  MatrixXd cc(gamma.rows() + s.rows() + c.rows(), n);
  cc << gamma, s, c;
  return PartitionedPlant(StateSpace(a, bb, cc, MatrixXd::Zero(cc.rows(), bb.cols())),
                          partitioned_map(l.cols(), w.cols(), b.cols(), gamma.rows(),
                                          s.rows(), c.rows()));
}

MatrixXd PartitionedPlant::input_block(const std::string& name) const {
  const auto& g = cmap_.input(name);
  return sys_.B().middleCols(g.offset, g.size);
}

MatrixXd PartitionedPlant::output_block(const std::string& name) const {
  const auto& g = cmap_.output(name);
  return sys_.C().middleRows(g.offset, g.size);
}

void require_compatible(const PartitionedPlant& g, const EnvironmentModel& env,
                        const char* what) {
  if (env.inputs() != g.nw() || env.outputs() != g.nv()) {
    std::ostringstream os;
    os << what << ": environment maps " << env.inputs() << " -> " << env.outputs()
       << ", plant needs w (" << g.nw() << ") -> v (" << g.nv() << ")";
    throw DimensionError(os.str());
  }
}

StateSpace assemble_preexisting(const PartitionedPlant& g, const EnvironmentModel& env) {
  require_compatible(g, env, "assemble_preexisting");
  const StateSpace closed = close_environment(g.sys(), g, env);
  return lti::select(closed, concat(cols_of(g, "d"), cols_of(g, "u")),
                     concat(rows_of(g, "z"), rows_of(g, "y")));
}

MatrixXd interconnected_a(const PartitionedPlant& g, const EnvironmentModel& env) {
  require_compatible(g, env, "interconnected_a");
  return close_environment(g.sys(), g, env).A();
}

double closed_loop_abscissa(const MatrixXd& a, const MatrixXd& c_eval) {
  return lti::deflated_abscissa<double>(a, c_eval);
}

double admissibility_abscissa(const PartitionedPlant& g, const EnvironmentModel& env) {
  require_compatible(g, env, "check_admissible");
  const StateSpace closed = close_environment(g.sys(), g, env);
  return closed_loop_abscissa(closed.A(), z_rows_of(closed, g));
}

bool check_admissible(const PartitionedPlant& g, const EnvironmentModel& env) {
  return admissibility_abscissa(g, env) < -synthesis::kStabilityMargin;
}

PartitionedPlant new_subsystem(const PartitionedPlant& g, const EnvironmentModel& apx) {
  require_compatible(g, apx, "new_subsystem");
  const StateSpace closed = close_environment(g.sys(), g, apx);
  return PartitionedPlant(closed, g.channels());
}

Rectifier extended_rectifier(const PartitionedPlant& g, const EnvironmentModel& apx) {
  require_compatible(g, apx, "extended_rectifier");
  const StateSpace& m = apx.sys();
  const Index n = g.states(), na = m.states();
  const Index ny = g.ny(), nw = g.nw(), nv = g.nv();
  const MatrixXd a = g.A(), l = g.L(), gam = g.Gamma(), c = g.C();

  // x^' = A x^ + L (v - v_apx),  v_apx = G_apx (w - Gamma x^)
  MatrixXd ar(n + na, n + na);
  ar << a + l * m.D() * gam, -l * m.C(), -m.B() * gam, m.A();
  MatrixXd br = MatrixXd::Zero(n + na, ny + nw + nv);
  br.block(0, ny, n, nw) = -l * m.D();
  br.block(0, ny + nw, n, nv) = l;
  br.block(n, ny, na, nw) = m.B();
  MatrixXd cr = MatrixXd::Zero(ny + nw, n + na);
  cr.topLeftCorner(ny, n) = -c;
  cr.bottomLeftCorner(nw, n) = -gam;
  MatrixXd dr = MatrixXd::Zero(ny + nw, ny + nw + nv);
  dr.leftCols(ny + nw).setIdentity();
  return Rectifier{StateSpace(ar, br, cr, dr), new_subsystem(g, apx), n, na};
}

Rectifier corrupt_rectifier_sign(const Rectifier& rect) {
  MatrixXd b = rect.sys.B();
  const Index nv = b.cols() - rect.sys.outputs();
  b.rightCols(nv) *= -1.0;
  Rectifier out = rect;
  out.sys = StateSpace(rect.sys.A(), b, rect.sys.C(), rect.sys.D());
  return out;
}

RetrofitController compose_retrofit(const ModuleController& module, const Rectifier& rect) {
  const PartitionedPlant& gp = rect.design_plant;
  if (module.ny() != gp.ny() || module.nw() != gp.nw() || module.nu() != gp.nu()) {
    throw DimensionError("compose_retrofit: module channels do not match the design plant");
  }
  const double abscissa = synthesis::module_loop_abscissa(gp, module);
  if (!(abscissa < -synthesis::kStabilityMargin)) {
    std::ostringstream os;
    os << "compose_retrofit: module does not stabilize the new subsystem (abscissa "
       << abscissa << ")";
    throw UnverifiedModuleError(os.str());
  }
  StateSpace realized = lti::series(rect.sys, module.system());
  return RetrofitController(rect, module, std::move(realized), abscissa);
}

StateSpace closed_loop_direct(const PartitionedPlant& g, const EnvironmentModel& env,
                              const StateSpace& k) {
  require_compatible(g, env, "closed_loop_direct");
  if (k.inputs() != g.ny() + g.nw() + g.nv() || k.outputs() != g.nu()) {
    throw DimensionError("closed_loop_direct: controller must map (y, w, v) -> u");
  }
  const StateSpace with_env = close_environment(with_measured_v(g), g, env);
  const Index p = g.sys().outputs();
  const std::vector<Index> meas =
      concat(concat(rows_of(g, "y"), rows_of(g, "w")), range(p, g.nv()));
  const StateSpace closed = lti::interconnect(with_env, k, cols_of(g, "u"), meas);
  return lti::select(closed, cols_of(g, "d"), rows_of(g, "z"));
}

StateSpace closed_loop_unrectified(const PartitionedPlant& g, const EnvironmentModel& env,
                                   const ModuleController& module) {
  require_compatible(g, env, "closed_loop_unrectified");
  const StateSpace with_env = close_environment(g.sys(), g, env);
  const StateSpace closed = lti::interconnect(with_env, module.system(), cols_of(g, "u"),
                                              concat(rows_of(g, "y"), rows_of(g, "w")));
  return lti::select(closed, cols_of(g, "d"), rows_of(g, "z"));
}

namespace {

/// max_w ||G'_wv - G_wv|| with G'_wv - G_wv = G_wu (I - K G_mu)^{-1} K G_mv
/// evaluated pointwise; m = (y, w, v). `apply(w, gmv)` returns K(jw) and
/// K(jw) G_mv(jw).
template <typename Apply>
double local_loop_residual(const PartitionedPlant& g, const std::vector<double>& grid,
                           Apply apply) {
  using Eigen::MatrixXcd;
  const StateSpace gmu = g.channel({"u"}, {"y", "w"});
  const StateSpace gmv = g.channel({"v"}, {"y", "w"});
  const StateSpace gwu = g.channel({"u"}, {"w"});
  const Index nm = g.ny() + g.nw() + g.nv(), nu = g.nu(), nv = g.nv();
  double worst = 0;
  for (double w : grid) {
    MatrixXcd mu = MatrixXcd::Zero(nm, nu), mv = MatrixXcd::Zero(nm, nv);
    mu.topRows(nm - nv) = lti::freq_response(gmu, w);
    mv.topRows(nm - nv) = lti::freq_response(gmv, w);
    mv.bottomRows(nv).setIdentity();
    const auto [kw, kmv] = apply(w, mv);
    Eigen::PartialPivLU<MatrixXcd> lu(MatrixXcd::Identity(nu, nu) - kw * mu);
    if (nu > 0 && !(lu.rcond() > 1e-12)) {
      throw IllPosedLoopError("invariance_residual: local loop is singular at w = " +
                              std::to_string(w));
    }
    const MatrixXcd diff = lti::freq_response(gwu, w) * lu.solve(kmv);
    if (diff.size() > 0) {
      worst = std::max(worst, Eigen::JacobiSVD<MatrixXcd>(diff).singularValues()(0));
    }
  }
  return worst;
}

}  // namespace

double invariance_residual(const PartitionedPlant& g, const StateSpace& k,
                           const std::vector<double>& grid) {
  if (k.inputs() != g.ny() + g.nw() + g.nv() || k.outputs() != g.nu()) {
    throw DimensionError("invariance_residual: controller must map (y, w, v) -> u");
  }
  return local_loop_residual(g, grid, [&](double w, const Eigen::MatrixXcd& mv) {
    Eigen::MatrixXcd kw = lti::freq_response(k, w);
    Eigen::MatrixXcd kmv = kw * mv;
    return std::pair{kw, kmv};
  });
}

double invariance_residual(const PartitionedPlant& g, const RetrofitController& k,
                           const std::vector<double>& grid) {
  const StateSpace& rect = k.rectifier().sys;
  const StateSpace& module = k.module().system();
  if (rect.inputs() != g.ny() + g.nw() + g.nv()) {
    throw DimensionError("invariance_residual: rectifier does not match the subsystem");
  }
  // K G_mv = K^ (XR G_mv): the rectifier annihilates G_mv before the module
  // gain is applied.
  return local_loop_residual(g, grid, [&](double w, const Eigen::MatrixXcd& mv) {
    const Eigen::MatrixXcd kh = lti::freq_response(module, w);
    const Eigen::MatrixXcd xr = lti::freq_response(rect, w);
    Eigen::MatrixXcd kw = kh * xr;
    Eigen::MatrixXcd kmv = kh * (xr * mv);
    return std::pair{kw, kmv};
  });
}

CascadeRealization cascade_realization(const PartitionedPlant& g, const EnvironmentModel& env,
                                       const EnvironmentModel& apx,
                                       const ModuleController& module) {
  require_compatible(g, env, "cascade_realization");
  require_compatible(g, apx, "cascade_realization");
  if (module.ny() != g.ny() || module.nw() != g.nw() || module.nu() != g.nu()) {
    throw DimensionError("cascade_realization: module channels do not match the plant");
  }
  const MatrixXd a = g.A(), l = g.L(), wd = g.W(), b = g.B();
  const MatrixXd gam = g.Gamma(), s = g.S(), c = g.C();
  const StateSpace& ma = apx.sys();
  const StateSpace& me = env.sys();
  const StateSpace& k = module.system();
  const Index n = g.states(), na = ma.states(), nk = k.states(), ne = me.states();
  const Index nd = g.nd(), nz = g.nz(), nw = g.nw(), nv = g.nv(), ny = g.ny();

  // Measurement of the upstream state: (y^, w^) = [C; Gamma] xi^.
  MatrixXd cm(ny + nw, n);
  cm << c, gam;
  const MatrixXd dk_cm = k.D() * cm;

  // Upstream: xi^' = A xi^ + L v_apx + B u + W d.
  const Index nu_states = n + na + nk;
  MatrixXd au = MatrixXd::Zero(nu_states, nu_states);
  au.block(0, 0, n, n) = a + l * ma.D() * gam + b * dk_cm;
  au.block(0, n, n, na) = l * ma.C();
  au.block(0, n + na, n, nk) = b * k.C();
  au.block(n, 0, na, n) = ma.B() * gam;
  au.block(n, n, na, na) = ma.A();
  au.block(n + na, 0, nk, n) = k.B() * cm;
  au.block(n + na, n + na, nk, nk) = k.A();
  MatrixXd bu = MatrixXd::Zero(nu_states, nd);
  bu.topRows(n) = wd;
  MatrixXd cu = MatrixXd::Zero(nz + nw + nv, nu_states);
  cu.block(0, 0, nz, n) = s;
  cu.block(nz, 0, nw, n) = gam;
  cu.block(nz + nw, 0, nv, n) = ma.D() * gam;
  cu.block(nz + nw, n, nv, na) = ma.C();
  const StateSpace upstream(au, bu, cu, MatrixXd::Zero(nz + nw + nv, nd));

  // Downstream: xi_' = A xi_ + L (v - v_apx), v = G (w^ + Gamma xi_).
  const Index nd_states = n + ne;
  MatrixXd ad(nd_states, nd_states);
  ad << a + l * me.D() * gam, l * me.C(), me.B() * gam, me.A();
  MatrixXd bdn(nd_states, nw + nv);
  bdn << l * me.D(), -l, me.B(), MatrixXd::Zero(ne, nv);
  MatrixXd cdn = MatrixXd::Zero(nz, nd_states);
  cdn.leftCols(n) = s;
  const StateSpace downstream(ad, bdn, cdn, MatrixXd::Zero(nz, nw + nv));

  // Full cascade, state (upstream, downstream).
  const Index nt = nu_states + nd_states;
  MatrixXd af = MatrixXd::Zero(nt, nt);
  af.topLeftCorner(nu_states, nu_states) = au;
  af.bottomLeftCorner(nd_states, nu_states) = bdn * cu.bottomRows(nw + nv);
  af.bottomRightCorner(nd_states, nd_states) = ad;
  MatrixXd bf = MatrixXd::Zero(nt, nd);
  bf.topRows(nu_states) = bu;
  MatrixXd cf = MatrixXd::Zero(3 * nz + nw, nt);
  cf.block(0, 0, nz, nu_states) = cu.topRows(nz);
  cf.block(0, nu_states, nz, nd_states) = cdn;
  cf.block(nz, 0, nz, nu_states) = cu.topRows(nz);
  cf.block(2 * nz, nu_states, nz, nd_states) = cdn;
  cf.block(3 * nz, 0, nw, nu_states) = cu.middleRows(nz, nw);
  const StateSpace full(af, bf, cf, MatrixXd::Zero(3 * nz + nw, nd));

  ChannelMap taps;
  taps.add_input("d", nd);
  taps.add_output("z", nz).add_output("zhat", nz).add_output("zcheck", nz).add_output("what", nw);
  return CascadeRealization{upstream, downstream, full, taps};
}

double deflated_norm(const StateSpace& sys, double tol, double hidden_tol) {
  const StateSpace m = lti::remove_hidden_marginal(sys, hidden_tol);
  if (m.states() == 0) {
    return m.D().size() == 0 ? 0.0 : Eigen::JacobiSVD<MatrixXd>(m.D()).singularValues()(0);
  }
  return lti::hinf_norm(m, tol);
}

PerformanceReport performance_bounds(const PartitionedPlant& g, const EnvironmentModel& env,
                                     const EnvironmentModel& apx,
                                     const ModuleController& module, double norm_tol,
                                     double minreal_tol) {
  const RetrofitController k = compose_retrofit(module, extended_rectifier(g, apx));
  const CascadeRealization cas = cascade_realization(g, env, apx, module);
  PerformanceReport rep;
  const StateSpace tzd = cas.t_zd();
  rep.abscissa = closed_loop_abscissa(tzd.A(), tzd.C());
  rep.stable = rep.abscissa < -synthesis::kStabilityMargin;
  rep.invariance_residual = invariance_residual(g, k, lti::default_grid());
  if (!rep.stable) return rep;
  rep.gamma_actual = deflated_norm(tzd, norm_tol, minreal_tol);
  rep.gamma_hat = deflated_norm(cas.tap("zhat"), norm_tol, minreal_tol);
  rep.gamma_check = deflated_norm(cas.tap("zcheck"), norm_tol, minreal_tol);
  rep.lower = std::abs(rep.gamma_check - rep.gamma_hat);
  rep.upper = rep.gamma_hat + rep.gamma_check;
  return rep;
}

}  // namespace retrofit
