#include "retrofit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "retrofit/errors.hpp"
#include "retrofit/reduction.hpp"

namespace retrofit::experiment {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string> kTopKeys = {
    "schema_version", "network",     "topology_seed", "kc_grid",    "napx_grid",
    "alpha_list",     "controller_mode", "epsilon",   "gamma_tol",  "norm_tol",
    "minreal_tol",    "output_dir",  "seed",          "simulation", "verify"};

template <typename T>
T get_number(const json& j, const char* key) {
  if (!j.is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return j.get<T>();
}

std::vector<double> number_list(const json& j, const char* key) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(std::string("config: '") + key + "' must be a nonempty array");
  }
  std::vector<double> out;
  for (const auto& v : j) out.push_back(get_number<double>(v, key));
  return out;
}

std::vector<Index> label_list(const json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string("config: '") + key + "' must be an array");
  std::vector<Index> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) {
      throw ConfigError(std::string("config: '") + key + "' entries must be integers");
    }
    out.push_back(v.get<Index>());
  }
  return out;
}

VectorXd per_node(const json& j, Index n, const char* key) {
  if (j.is_number()) return VectorXd::Constant(n, j.get<double>());
  const auto v = number_list(j, key);
  if (static_cast<Index>(v.size()) != n) {
    throw ConfigError(std::string("config: '") + key + "' needs one value per node");
  }
  return Eigen::Map<const VectorXd>(v.data(), n);
}

void parse_network(const json& j, ExperimentConfig& cfg) {
  if (j.is_string()) {
    if (j.get<std::string>() != "paper-benchmark") {
      throw ConfigError("config: unknown network preset '" + j.get<std::string>() + "'");
    }
    cfg.benchmark = true;
    return;
  }
  if (!j.is_object()) throw ConfigError("config: 'network' must be a preset name or an object");
  static const std::set<std::string> keys = {"node_count", "edges", "inertia", "damping",
                                             "subsystem_nodes", "assignment"};
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("config: unknown network key '" + k + "'");
  }
  for (const char* k : {"node_count", "edges", "inertia", "damping", "subsystem_nodes",
                        "assignment"}) {
    if (!j.contains(k)) throw ConfigError(std::string("config: network needs '") + k + "'");
  }
  cfg.benchmark = false;
  oscnet::NetworkSpec& s = cfg.network;
  if (!j["node_count"].is_number_integer()) {
    throw ConfigError("config: 'node_count' must be an integer");
  }
  s.node_count = j["node_count"].get<Index>();
  s.edges.clear();
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() ||
        !e[1].is_number_integer() || !e[2].is_number()) {
      throw ConfigError("config: each edge must be [i, j, stiffness]");
    }
    s.edges.push_back({e[0].get<Index>(), e[1].get<Index>(), e[2].get<double>()});
  }
  s.inertia = per_node(j["inertia"], s.node_count, "inertia");
  s.damping = per_node(j["damping"], s.node_count, "damping");
  s.subsystem_nodes = label_list(j["subsystem_nodes"], "subsystem_nodes");
  const json& a = j["assignment"];
  for (const char* k : {"actuated", "disturbed", "measured", "evaluated"}) {
    if (!a.contains(k)) throw ConfigError(std::string("config: assignment needs '") + k + "'");
  }
  cfg.assignment.actuated = label_list(a["actuated"], "actuated");
  cfg.assignment.disturbed = label_list(a["disturbed"], "disturbed");
  cfg.assignment.measured = label_list(a["measured"], "measured");
  cfg.assignment.evaluated = label_list(a["evaluated"], "evaluated");
  s.kc = 0;
  oscnet::validate(s);
}

bool is_marginal(const StateSpace& s) {
  return s.states() > 0 && numerics::spectral_abscissa(s.A()) > -1e-6;
}

}  // namespace

ControllerMode parse_mode(const std::string& s) {
  if (s == "retrofit") return ControllerMode::Retrofit;
  if (s == "direct") return ControllerMode::Direct;
  if (s == "none") return ControllerMode::None;
  throw ConfigError("unknown controller mode '" + s + "' (expected retrofit, direct or none)");
}

std::string to_string(ControllerMode m) {
  switch (m) {
    case ControllerMode::Retrofit: return "retrofit";
    case ControllerMode::Direct: return "direct";
    case ControllerMode::None: return "none";
  }
  return "retrofit";
}

std::string napx_label(int napx) {
  if (napx == kNoModel) return "none";
  if (napx == kFullModel) return "full";
  return std::to_string(napx);
}

int parse_napx(const std::string& s) {
  if (s == "none") return kNoModel;
  if (s == "full") return kFullModel;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid model dimension '" + s + "' (expected none, full or n >= 0)");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!kTopKeys.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kSchemaVersion) {
    throw ConfigError("config: 'schema_version' must be " + std::to_string(kSchemaVersion));
  }
  ExperimentConfig cfg;
  if (j.contains("network")) parse_network(j["network"], cfg);
  if (j.contains("topology_seed")) cfg.topology_seed = get_number<std::uint64_t>(j["topology_seed"], "topology_seed");
  if (j.contains("kc_grid")) cfg.kc_grid = number_list(j["kc_grid"], "kc_grid");
  for (double kc : cfg.kc_grid) {
    if (!(kc >= 0)) throw ConfigError("config: kc_grid values must be >= 0");
  }
  if (j.contains("napx_grid")) {
    const json& g = j["napx_grid"];
    if (!g.is_array() || g.empty()) throw ConfigError("config: 'napx_grid' must be a nonempty array");
    cfg.napx_grid.clear();
    for (const auto& v : g) {
      if (v.is_string()) {
        cfg.napx_grid.push_back(parse_napx(v.get<std::string>()));
      } else if (v.is_number_integer() && v.get<int>() >= 0) {
        cfg.napx_grid.push_back(v.get<int>());
      } else {
        throw ConfigError("config: napx_grid entries must be \"none\", \"full\" or integers >= 0");
      }
    }
  }
  if (j.contains("alpha_list")) cfg.alpha_list = number_list(j["alpha_list"], "alpha_list");
  for (double a : cfg.alpha_list) {
    if (!(a > 0)) throw ConfigError("config: alpha values must be positive");
  }
  if (j.contains("controller_mode")) {
    if (!j["controller_mode"].is_string()) throw ConfigError("config: 'controller_mode' must be a string");
    cfg.mode = parse_mode(j["controller_mode"].get<std::string>());
  }
  if (j.contains("epsilon")) cfg.epsilon = get_number<double>(j["epsilon"], "epsilon");
  if (j.contains("gamma_tol")) cfg.gamma_tol = get_number<double>(j["gamma_tol"], "gamma_tol");
  if (j.contains("norm_tol")) cfg.norm_tol = get_number<double>(j["norm_tol"], "norm_tol");
  if (j.contains("minreal_tol")) cfg.minreal_tol = get_number<double>(j["minreal_tol"], "minreal_tol");
  if (!(cfg.epsilon >= 0) || !(cfg.gamma_tol > 0) || !(cfg.norm_tol > 0) || !(cfg.minreal_tol > 0)) {
    throw ConfigError("config: epsilon must be >= 0 and tolerances positive");
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("config: 'output_dir' must be a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("seed")) cfg.seed = get_number<std::uint64_t>(j["seed"], "seed");
  if (j.contains("simulation")) {
    const json& s = j["simulation"];
    if (!s.is_object()) throw ConfigError("config: 'simulation' must be an object");
    for (const auto& [k, v] : s.items()) {
      if (k != "duration" && k != "dt") throw ConfigError("config: unknown simulation key '" + k + "'");
    }
    if (s.contains("duration")) cfg.simulation.duration = get_number<double>(s["duration"], "duration");
    if (s.contains("dt")) cfg.simulation.dt = get_number<double>(s["dt"], "dt");
    if (!(cfg.simulation.dt > 0) || !(cfg.simulation.duration >= cfg.simulation.dt)) {
      throw ConfigError("config: simulation needs dt > 0 and duration >= dt");
    }
  }
  if (j.contains("verify")) {
    const json& v = j["verify"];
    if (!v.is_object()) throw ConfigError("config: 'verify' must be an object");
    for (const auto& [k, x] : v.items()) {
      if (k != "fuzz_count") throw ConfigError("config: unknown verify key '" + k + "'");
    }
    if (v.contains("fuzz_count")) {
      if (!v["fuzz_count"].is_number_integer() || v["fuzz_count"].get<int>() < 0) {
        throw ConfigError("config: 'fuzz_count' must be an integer >= 0");
      }
      cfg.fuzz_count = v["fuzz_count"].get<int>();
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

oscnet::NetworkSpec network_at(const ExperimentConfig& cfg, double kc) {
  if (cfg.benchmark) return oscnet::benchmark_network(kc, cfg.topology_seed);
  oscnet::NetworkSpec s = cfg.network;
  s.kc = kc;
  return s;
}

EnvironmentApproximation approximate_environment(const EnvironmentModel& env, Index nw,
                                                 Index nv, int napx, double norm_tol,
                                                 double minreal_tol) {
  EnvironmentApproximation out{EnvironmentModel::zero(nw, nv), 0.0, kNaN, 0};
  if (napx == kFullModel) {
    out.apx = env;
    out.order = env.states();
    out.error_bound = 0;
    return out;
  }
  StateSpace base = env.sys();
  if (is_marginal(base)) base = lti::minreal(base, minreal_tol);
  if (napx >= 0) {
    const Index r = std::min<Index>(napx, base.states());
    const auto red = reduction::balanced_truncate(base, r);
    out.apx = EnvironmentModel(red.reduced);
    out.error_bound = red.error_bound;
    out.order = red.reduced.states();
  }
  out.modeling_error = deflated_norm(lti::difference(base, out.apx.sys()), norm_tol, minreal_tol);
  return out;
}

synthesis::SynthesisResult design_module(const PartitionedPlant& g, const EnvironmentModel& apx,
                                         double alpha, double epsilon, double gamma_tol) {
  const PartitionedPlant gplus = new_subsystem(g, apx);
  return synthesis::hinf_synthesize(synthesis::build_generalized_plant(gplus, alpha, epsilon),
                                    gamma_tol);
}

unsigned worker_threads() {
  if (const char* env = std::getenv("RETROFIT_CTL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct Point {
  std::size_t kc_index;
  std::size_t napx_index;
  std::size_t alpha_index;
};

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg, unsigned threads) {
  const auto assign = cfg.assignment;
  const std::size_t nk = cfg.kc_grid.size(), nm = cfg.napx_grid.size(), na = cfg.alpha_list.size();

  // Partitions and environment models per (k_c, n_apx).
  std::vector<oscnet::Partition> parts;
  for (double kc : cfg.kc_grid) parts.push_back(oscnet::partition(network_at(cfg, kc), assign));
  std::vector<EnvironmentApproximation> approx(nk * nm, {EnvironmentModel::zero(0, 0), 0, 0, 0});
  std::vector<std::string> approx_error(nk * nm);
  parallel_for(nk * nm, threads, [&](std::size_t i) {
    const auto& p = parts[i / nm];
    try {
      approx[i] = approximate_environment(p.env, p.g.nw(), p.g.nv(), cfg.napx_grid[i % nm],
                                          cfg.norm_tol, cfg.minreal_tol);
    } catch (const std::exception& e) {
      approx_error[i] = e.what();
    }
  });

  SweepResult result;
  for (std::size_t i = 0; i < nk * nm; ++i) {
    ErrorRow er{cfg.kc_grid[i / nm], cfg.napx_grid[i % nm], approx[i].modeling_error,
                approx[i].error_bound};
    if (!approx_error[i].empty()) {
      er.modeling_error = kNaN;
      er.error_bound = kNaN;
    }
    result.errors.push_back(er);
  }

  std::vector<Point> points;
  for (std::size_t k = 0; k < nk; ++k)
    for (std::size_t m = 0; m < nm; ++m)
      for (std::size_t a = 0; a < na; ++a) points.push_back({k, m, a});
  result.rows.resize(points.size());

  parallel_for(points.size(), threads, [&](std::size_t i) {
    const Point& pt = points[i];
    const std::size_t ai = pt.kc_index * nm + pt.napx_index;
    const auto& part = parts[pt.kc_index];
    SweepRow row;
    row.k_c = cfg.kc_grid[pt.kc_index];
    row.n_apx = cfg.napx_grid[pt.napx_index];
    row.alpha = cfg.alpha_list[pt.alpha_index];
    row.modeling_error = approx[ai].modeling_error;
    row.gamma_actual = row.gamma_hat = row.gamma_check = row.invariance_residual = kNaN;
    std::ostringstream where;
    where << "k_c=" << format_double(row.k_c) << " n_apx=" << napx_label(row.n_apx)
          << " alpha=" << format_double(row.alpha) << ": ";
    if (!approx_error[ai].empty()) {
      row.modeling_error = kNaN;
      row.warning = where.str() + "environment model failed: " + approx_error[ai];
      result.rows[i] = row;
      return;
    }
    try {
      const EnvironmentModel& apx = approx[ai].apx;
      const auto design = design_module(part.g, apx, row.alpha, cfg.epsilon, cfg.gamma_tol);
      const PerformanceReport rep = performance_bounds(part.g, part.env, apx, design.controller,
                                                       cfg.norm_tol, cfg.minreal_tol);
      row.stable_retrofit = rep.stable;
      row.invariance_residual = rep.invariance_residual;
      if (rep.stable) {
        row.gamma_actual = rep.gamma_actual;
        row.gamma_hat = rep.gamma_hat;
        row.gamma_check = rep.gamma_check;
      }
      const StateSpace direct = closed_loop_unrectified(part.g, part.env, design.controller);
      row.stable_direct = closed_loop_abscissa(direct.A(), direct.C()) < -synthesis::kStabilityMargin;
    } catch (const std::exception& e) {
      row.warning = where.str() + e.what();
    }
    result.rows[i] = row;
  });

  for (const auto& r : result.rows) {
    if (!r.warning.empty()) result.warnings.push_back(r.warning);
  }
  return result;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string errors_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "k_c,n_apx,modeling_error,error_bound\n";
  for (const auto& e : r.errors) {
    os << format_double(e.k_c) << ',' << napx_label(e.n_apx) << ',' << format_double(e.modeling_error)
       << ',' << format_double(e.error_bound) << '\n';
  }
  return os.str();
}

std::string performance_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "k_c,n_apx,alpha,modeling_error,gamma_actual,gamma_hat,gamma_check,stable_retrofit,"
        "stable_direct,invariance_residual\n";
  for (const auto& row : r.rows) {
    os << format_double(row.k_c) << ',' << napx_label(row.n_apx) << ',' << format_double(row.alpha)
       << ',' << format_double(row.modeling_error) << ',' << format_double(row.gamma_actual) << ','
       << format_double(row.gamma_hat) << ',' << format_double(row.gamma_check) << ','
       << (row.stable_retrofit ? "true" : "false") << ',' << (row.stable_direct ? "true" : "false")
       << ',' << format_double(row.invariance_residual) << '\n';
  }
  return os.str();
}

SimulationResult run_simulation(const ExperimentConfig& cfg, double kc, int napx, double alpha,
                                ControllerMode mode) {
  const oscnet::Partition part = oscnet::partition(network_at(cfg, kc), cfg.assignment);
  const PartitionedPlant& g = part.g;
  const Index samples =
      static_cast<Index>(std::floor(cfg.simulation.duration / cfg.simulation.dt + 1e-9)) + 1;
  SimulationResult out;
  out.t.resize(static_cast<std::size_t>(samples));
  for (Index k = 0; k < samples; ++k) out.t[static_cast<std::size_t>(k)] = k * cfg.simulation.dt;

  StateSpace sys;
  bool taps = true;
  if (mode == ControllerMode::None) {
    // Zero module: the cascade still splits z into z^ and z_.
    const ModuleController zero = ModuleController::static_gains(
        MatrixXd::Zero(g.nu(), g.ny()), MatrixXd::Zero(g.nu(), g.nw()));
    const auto approx =
        approximate_environment(part.env, g.nw(), g.nv(), napx, cfg.norm_tol, cfg.minreal_tol);
    sys = cascade_realization(g, part.env, approx.apx, zero).full;
  } else {
    const auto approx =
        approximate_environment(part.env, g.nw(), g.nv(), napx, cfg.norm_tol, cfg.minreal_tol);
    const auto design = design_module(g, approx.apx, alpha, cfg.epsilon, cfg.gamma_tol);
    if (mode == ControllerMode::Retrofit) {
      sys = cascade_realization(g, part.env, approx.apx, design.controller).full;
    } else {
      sys = closed_loop_unrectified(g, part.env, design.controller);
      taps = false;
    }
  }
  const Index nz = g.nz();
  const MatrixXd y = lti::impulse_response(sys, 0, cfg.simulation.dt, samples);
  out.abscissa = closed_loop_abscissa(sys.A(), sys.C().topRows(nz));
  out.stable = out.abscissa < -synthesis::kStabilityMargin;
  if (!out.stable) {
    out.warnings.push_back("closed loop is not stable (deflated spectral abscissa " +
                           format_double(out.abscissa) + ")");
  }
  out.z = y.topRows(nz).transpose();
  if (taps) {
    out.zhat = y.middleRows(nz, nz).transpose();
    out.zcheck = y.middleRows(2 * nz, nz).transpose();
  } else {
    out.zhat = MatrixXd::Constant(samples, nz, kNaN);
    out.zcheck = MatrixXd::Constant(samples, nz, kNaN);
  }
  return out;
}

std::string simulation_csv(const SimulationResult& r) {
  std::ostringstream os;
  const Index nz = r.z.cols();
  os << 't';
  for (const char* name : {"z", "zhat", "zcheck"})
    for (Index k = 1; k <= nz; ++k) os << ',' << name << '_' << k;
  os << '\n';
  for (std::size_t s = 0; s < r.t.size(); ++s) {
    const Index i = static_cast<Index>(s);
    os << format_double(r.t[s]);
    for (const MatrixXd* m : {&r.z, &r.zhat, &r.zcheck})
      for (Index k = 0; k < nz; ++k) os << ',' << format_double((*m)(i, k));
    os << '\n';
  }
  return os.str();
}

}  // namespace retrofit::experiment
