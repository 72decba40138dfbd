#include "retrofit/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "retrofit/fuzz.hpp"

namespace retrofit::verify {

using nlohmann::json;
using ComplexMatrixXd = Eigen::MatrixXcd;

namespace {

constexpr double kKernelTol = 1e-8;
constexpr double kCascadeTol = 1e-6;
constexpr double kSandwichTol = 1e-9;
constexpr double kInvarianceTol = 1e-8;
constexpr double kIdentityTol = 1e-9;

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

json system_json(const StateSpace& s) {
  return {{"A", matrix_json(s.A())}, {"B", matrix_json(s.B())}, {"C", matrix_json(s.C())},
          {"D", matrix_json(s.D())}};
}

json plant_json(const PartitionedPlant& g) {
  json j = system_json(g.sys());
  j["inputs"] = {{"v", g.nv()}, {"d", g.nd()}, {"u", g.nu()}};
  j["outputs"] = {{"w", g.nw()}, {"z", g.nz()}, {"y", g.ny()}};
  return j;
}

json instance_json(const fuzz::Instance& inst) {
  return {{"plant", plant_json(inst.g)},
          {"environment", system_json(inst.env.sys())},
          {"model", system_json(inst.apx.sys())},
          {"module", system_json(inst.module.system())}};
}

/// Accumulates one check; failing instances are recorded with their index.
struct Recorder {
  CheckResult r;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Recorder(std::string name, double threshold) {
    r.name = std::move(name);
    r.threshold = threshold;
    r.worst = -std::numeric_limits<double>::infinity();
  }

  void observe(double metric, bool ok, const std::function<json()>& describe) {
    ++r.instances;
    if (std::isnan(metric)) {
      r.worst = metric;
    } else if (!std::isnan(r.worst)) {
      r.worst = std::max(r.worst, metric);
    }
    if (!ok) {
      ++r.failures;
      r.passed = false;
      if (r.failing.size() < 10) {
        json j = describe();
        j["index"] = r.instances - 1;
        j["metric"] = std::isfinite(metric) ? json(metric) : json(nullptr);
        r.failing.push_back(j.dump());
      }
    }
  }

  void error(const std::string& what, const std::function<json()>& describe) {
    ++r.instances;
    ++r.failures;
    r.passed = false;
    if (r.failing.size() < 10) {
      json j = describe();
      j["index"] = r.instances - 1;
      j["error"] = what;
      r.failing.push_back(j.dump());
    }
    if (r.detail.empty()) r.detail = what;
  }

  CheckResult finish() {
    r.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.instances == 0) r.detail = "no instances";
    return r;
  }
};

double sigma_max(const ComplexMatrixXd& m) {
  if (m.size() == 0) return 0;
  return Eigen::JacobiSVD<ComplexMatrixXd>(m).singularValues()(0);
}

/// (y, w, v) response of G to v, with v passed through.
StateSpace measured_v_response(const PartitionedPlant& g) {
  const StateSpace yw = g.channel({"v"}, {"y", "w"});
  MatrixXd c(yw.outputs() + g.nv(), g.states());
  c << yw.C(), MatrixXd::Zero(g.nv(), g.states());
  MatrixXd d = MatrixXd::Zero(c.rows(), g.nv());
  d.bottomRows(g.nv()).setIdentity();
  return StateSpace(yw.A(), yw.B(), c, d);
}

double kernel_residual(const PartitionedPlant& g, const Rectifier& rect) {
  const StateSpace gv = measured_v_response(g);
  double worst = 0;
  for (double w : lti::default_grid()) {
    worst = std::max(worst, sigma_max(lti::freq_response(rect.sys, w) * lti::freq_response(gv, w)));
  }
  return worst;
}

double invariance_metric(const PartitionedPlant& g, const RetrofitController& k) {
  return invariance_residual(g, k, lti::default_grid());
}

double cascade_metric(const PartitionedPlant& g, const EnvironmentModel& env,
                      const EnvironmentModel& apx, const ModuleController& module) {
  const RetrofitController k = compose_retrofit(module, extended_rectifier(g, apx));
  // Stable parts first: hidden marginal modes of both realizations would
  // otherwise be compared against each other in the difference.
  const StateSpace direct = lti::remove_hidden_marginal(closed_loop_direct(g, env, k.realized()));
  const StateSpace cascade =
      lti::remove_hidden_marginal(cascade_realization(g, env, apx, module).t_zd());
  const double ref = deflated_norm(direct);
  return deflated_norm(lti::difference(direct, cascade)) / std::max(ref, 1e-300);
}

/// Positive distance past the sandwich; zero when it holds.
double sandwich_violation(const PerformanceReport& rep) {
  return std::max({0.0, rep.lower - kSandwichTol - rep.gamma_actual,
                   rep.gamma_actual - rep.upper - kSandwichTol});
}

ComplexMatrixXd random_complex(fuzz::Rng& rng, Index r, Index c, double scale) {
  ComplexMatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = scale * std::complex<double>(rng.normal(), rng.normal());
  return m;
}

}  // namespace

CheckResult check_kernel_identity(std::uint64_t seed, int plants, int models, bool fault) {
  Recorder rec(fault ? "kernel identity (fault injected)" : "kernel identity", kKernelTol);
  fuzz::Rng rng(seed);
  for (int p = 0; p < plants; ++p) {
    const PartitionedPlant g = fuzz::random_plant(rng);
    for (int m = 0; m < models; ++m) {
      const EnvironmentModel apx = fuzz::random_model(rng, g, m % 2 == 1);
      const auto describe = [&] {
        return json{{"plant", plant_json(g)}, {"model", system_json(apx.sys())}};
      };
      try {
        Rectifier rect = extended_rectifier(g, apx);
        if (fault) rect = corrupt_rectifier_sign(rect);
        const double res = kernel_residual(g, rect);
        rec.observe(res, res <= kKernelTol, describe);
      } catch (const Error& e) {
        rec.error(e.what(), describe);
      }
    }
  }
  return rec.finish();
}

CheckResult check_robust_stability(std::uint64_t seed, int plants, int envs, int models) {
  Recorder rec("robust stability", -synthesis::kStabilityMargin);
  fuzz::Rng rng(seed);
  int resampled = 0;
  for (int p = 0; p < plants; ++p) {
    const PartitionedPlant g = fuzz::random_plant(rng);
    std::vector<EnvironmentModel> env_list;
    for (int e = 0; e < envs; ++e) env_list.push_back(fuzz::random_admissible_environment(rng, g));
    for (int m = 0; m < models; ++m) {
      std::optional<fuzz::Instance> inst;
      for (int attempt = 0; attempt < 10 && !inst; ++attempt) {
        EnvironmentModel apx = fuzz::random_model(rng, g, m % 2 == 1);
        try {
          ModuleController k = fuzz::design_random_module(g, apx);
          inst = fuzz::Instance{g, env_list.front(), std::move(apx), std::move(k)};
        } catch (const Error&) {
          ++resampled;
        }
      }
      if (!inst) {
        rec.error("module design failed on 10 consecutive models",
                  [&] { return json{{"plant", plant_json(g)}}; });
        continue;
      }
      const RetrofitController k = compose_retrofit(inst->module, extended_rectifier(g, inst->apx));
      for (const EnvironmentModel& env : env_list) {
        inst->env = env;
        const auto describe = [&] { return instance_json(*inst); };
        try {
          const StateSpace loop = closed_loop_direct(g, env, k.realized());
          const double a = closed_loop_abscissa(loop.A(), loop.C());
          rec.observe(a, a < -synthesis::kStabilityMargin, describe);
        } catch (const Error& e) {
          rec.error(e.what(), describe);
        }
      }
    }
  }
  CheckResult r = rec.finish();
  if (r.detail.empty()) {
    r.detail = std::to_string(r.instances - r.failures) + "/" + std::to_string(r.instances) +
               " stable, " + std::to_string(resampled) + " models resampled";
  }
  return r;
}

CheckResult check_cascade_equivalence(std::uint64_t seed, int count) {
  Recorder rec("cascade equivalence", kCascadeTol);
  fuzz::Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const fuzz::Instance inst = fuzz::random_instance(rng, i % 2 == 1);
    const auto describe = [&] { return instance_json(inst); };
    try {
      const double m = cascade_metric(inst.g, inst.env, inst.apx, inst.module);
      rec.observe(m, m <= kCascadeTol, describe);
    } catch (const Error& e) {
      rec.error(e.what(), describe);
    }
  }
  return rec.finish();
}

CheckResult check_bound_sandwich(std::uint64_t seed, int count) {
  Recorder rec("bound sandwich", 0.0);
  fuzz::Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const fuzz::Instance inst = fuzz::random_instance(rng, i % 2 == 1);
    const auto describe = [&] { return instance_json(inst); };
    try {
      const PerformanceReport rep = performance_bounds(inst.g, inst.env, inst.apx, inst.module);
      if (!rep.stable) {
        rec.error("closed loop unstable (abscissa " + experiment::format_double(rep.abscissa) + ")",
                  describe);
        continue;
      }
      const double v = sandwich_violation(rep);
      rec.observe(v, v <= 0.0, describe);
    } catch (const Error& e) {
      rec.error(e.what(), describe);
    }
  }
  return rec.finish();
}

CheckResult check_invariance(std::uint64_t seed, int count) {
  Recorder rec("invariance residual", kInvarianceTol);
  fuzz::Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const fuzz::Instance inst = fuzz::random_instance(rng, i % 2 == 1);
    const auto describe = [&] { return instance_json(inst); };
    try {
      const RetrofitController k =
          compose_retrofit(inst.module, extended_rectifier(inst.g, inst.apx));
      const double m = invariance_metric(inst.g, k);
      rec.observe(m, m <= kInvarianceTol, describe);
    } catch (const Error& e) {
      rec.error(e.what(), describe);
    }
  }
  return rec.finish();
}

CheckResult check_matrix_identities(std::uint64_t seed, int count) {
  Recorder rec("matrix identities", kIdentityTol);
  fuzz::Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const Index p = rng.integer(1, 4), m = rng.integer(1, 4);
    const ComplexMatrixXd pm = random_complex(rng, p, m, 0.5);
    const ComplexMatrixXd km = random_complex(rng, m, p, 0.5);
    const ComplexMatrixXd ip = ComplexMatrixXd::Identity(p, p), im = ComplexMatrixXd::Identity(m, m);
    const ComplexMatrixXd inv = (ip - pm * km).inverse();
    const double scale = std::max(1.0, sigma_max(inv)) * std::max(1.0, sigma_max(pm) * sigma_max(km));
    double worst = sigma_max(inv - (ip + pm * km * inv));
    worst = std::max(worst, sigma_max(inv - (ip + inv * pm * km)));
    worst = std::max(worst, sigma_max(pm * (im - km * pm).inverse() - inv * pm));
    worst /= scale;

    // Closed loop of random systems against the pointwise formula.
    const StateSpace ps(fuzz::random_with_abscissa(rng, 3, -0.5), fuzz::random_matrix(rng, 3, m),
                        fuzz::random_matrix(rng, p, 3), fuzz::random_matrix(rng, p, m, 0.3));
    const StateSpace ks(fuzz::random_with_abscissa(rng, 2, -0.5), fuzz::random_matrix(rng, 2, p),
                        fuzz::random_matrix(rng, m, 2), fuzz::random_matrix(rng, m, p, 0.3));
    const auto describe = [&] {
      return json{{"P", system_json(ps)}, {"K", system_json(ks)}};
    };
    try {
      const StateSpace cl = lti::feedback(ps, ks);
      for (double w : {0.1, 1.0, 10.0}) {
        const ComplexMatrixXd pw = lti::freq_response(ps, w), kw = lti::freq_response(ks, w);
        const ComplexMatrixXd ref = (ip - pw * kw).inverse() * pw;
        const double err = sigma_max(lti::freq_response(cl, w) - ref) / std::max(1.0, sigma_max(ref));
        worst = std::max(worst, err);
      }
      rec.observe(worst, worst <= kIdentityTol, describe);
    } catch (const Error& e) {
      rec.error(e.what(), describe);
    }
  }
  return rec.finish();
}

std::vector<CheckResult> benchmark_checks(const experiment::ExperimentConfig& cfg, bool fault) {
  const double kc = *std::max_element(cfg.kc_grid.begin(), cfg.kc_grid.end());
  const double alpha = cfg.alpha_list.front();
  const oscnet::Partition part = oscnet::partition(experiment::network_at(cfg, kc), cfg.assignment);
  const auto approx = experiment::approximate_environment(part.env, part.g.nw(), part.g.nv(), 2,
                                                          cfg.norm_tol, cfg.minreal_tol);
  const json where = {{"k_c", kc}, {"n_apx", 2}, {"alpha", alpha}};
  const auto describe = [&] { return json{{"benchmark", where}}; };
  std::vector<CheckResult> out;

  {
    Recorder rec(fault ? "benchmark kernel identity (fault injected)" : "benchmark kernel identity",
                 kKernelTol);
    try {
      Rectifier rect = extended_rectifier(part.g, approx.apx);
      if (fault) rect = corrupt_rectifier_sign(rect);
      const double res = kernel_residual(part.g, rect);
      rec.observe(res, res <= kKernelTol, describe);
    } catch (const Error& e) {
      rec.error(e.what(), describe);
    }
    out.push_back(rec.finish());
  }

  Recorder inv("benchmark invariance residual", kInvarianceTol);
  Recorder cas("benchmark cascade equivalence", kCascadeTol);
  Recorder sand("benchmark bound sandwich", 0.0);
  try {
    const auto design =
        experiment::design_module(part.g, approx.apx, alpha, cfg.epsilon, cfg.gamma_tol);
    const RetrofitController k =
        compose_retrofit(design.controller, extended_rectifier(part.g, approx.apx));
    const double m = invariance_metric(part.g, k);
    inv.observe(m, m <= kInvarianceTol, describe);
    const double c = cascade_metric(part.g, part.env, approx.apx, design.controller);
    cas.observe(c, c <= kCascadeTol, describe);
    const PerformanceReport rep = performance_bounds(part.g, part.env, approx.apx,
                                                     design.controller, cfg.norm_tol,
                                                     cfg.minreal_tol);
    if (rep.stable) {
      const double v = sandwich_violation(rep);
      sand.observe(v, v <= 0.0, describe);
    } else {
      sand.error("closed loop unstable", describe);
    }
  } catch (const Error& e) {
    for (Recorder* r : {&inv, &cas, &sand})
      if (r->r.instances == 0) r->error(e.what(), describe);
  }
  out.push_back(inv.finish());
  out.push_back(cas.finish());
  out.push_back(sand.finish());
  return out;
}

std::vector<CheckResult> run_verify(const experiment::ExperimentConfig& cfg,
                                    const VerifyOptions& opts) {
  std::vector<CheckResult> results = benchmark_checks(cfg, opts.inject_rectifier_fault);
  results.push_back(check_matrix_identities(opts.seed, 20));
  const int n = opts.fuzz_count;
  if (n <= 0) return results;
  // Distinct streams per check so each one replays on its own.
  results.push_back(check_kernel_identity(opts.seed + 1, n, n, opts.inject_rectifier_fault));
  results.push_back(check_robust_stability(opts.seed + 2, std::max(1, n / 4), 10, 10));
  results.push_back(check_cascade_equivalence(opts.seed + 3, n));
  results.push_back(check_bound_sandwich(opts.seed + 4, n));
  results.push_back(check_invariance(opts.seed + 5, n));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-44s %-6s %9s %12s %12s %8s\n", "check", "result",
                "instances", "worst", "threshold", "seconds");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-44s %-6s %9d %12.3e %12.3e %8.2f\n", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.instances, r.worst, r.threshold, r.seconds);
    os << line;
    if (!r.detail.empty()) os << "    " << r.detail << '\n';
  }
  return os.str();
}

std::string failures_json(const std::vector<CheckResult>& results, const VerifyOptions& opts) {
  json doc = {{"seed", opts.seed},
              {"fuzz_count", opts.fuzz_count},
              {"inject_fault", opts.inject_rectifier_fault ? "rectifier-sign" : "none"}};
  json checks = json::array();
  for (const auto& r : results) {
    if (r.passed) continue;
    json c = {{"name", r.name}, {"failures", r.failures}, {"instances", json::array()}};
    for (const auto& s : r.failing) c["instances"].push_back(json::parse(s));
    checks.push_back(c);
  }
  doc["failed_checks"] = checks;
  return doc.dump(2);
}

}  // namespace retrofit::verify
