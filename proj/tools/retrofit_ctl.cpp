// retrofit-ctl: sweeps, impulse simulations and the invariant suite.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "retrofit/errors.hpp"
#include "retrofit/experiment.hpp"
#include "retrofit/verify.hpp"

namespace {

namespace fs = std::filesystem;
namespace ex = retrofit::experiment;
using nlohmann::json;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw retrofit::ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json config_summary(const ex::ExperimentConfig& cfg, const std::string& path) {
  json napx = json::array();
  for (int n : cfg.napx_grid) napx.push_back(ex::napx_label(n));
  return {{"config", path},
          {"schema_version", ex::kSchemaVersion},
          {"network", cfg.benchmark ? "paper-benchmark" : "explicit"},
          {"topology_seed", cfg.topology_seed},
          {"kc_grid", cfg.kc_grid},
          {"napx_grid", napx},
          {"alpha_list", cfg.alpha_list},
          {"epsilon", cfg.epsilon},
          {"gamma_tol", cfg.gamma_tol},
          {"norm_tol", cfg.norm_tol},
          {"minreal_tol", cfg.minreal_tol},
          {"seed", cfg.seed}};
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_sweep(const std::string& config, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ex::ExperimentConfig cfg = ex::load_config(config);
  const fs::path dir = prepare_dir(out_dir.empty() ? cfg.output_dir : out_dir);
  const unsigned threads = ex::worker_threads();
  const ex::SweepResult r = ex::run_sweep(cfg, threads);
  write_file(dir / "errors.csv", ex::errors_csv(r));
  write_file(dir / "performance.csv", ex::performance_csv(r));
  json meta = config_summary(cfg, config);
  meta["command"] = "sweep";
  meta["rows"] = r.rows.size();
  meta["warnings"] = r.warnings;
  meta["warning_count"] = r.warnings.size();
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "sweep: " << r.rows.size() << " rows, " << r.warnings.size() << " warnings, "
            << threads << " threads, " << elapsed(t0) << " s -> " << dir.string() << '\n';
  return 0;
}

int cmd_simulate(const std::string& config, double kc, const std::string& napx, double alpha,
                 const std::string& mode, const std::string& out_dir) {
  const ex::ExperimentConfig cfg = ex::load_config(config);
  const fs::path dir = prepare_dir(out_dir.empty() ? cfg.output_dir : out_dir);
  const ex::ControllerMode m = ex::parse_mode(mode);
  const int n = ex::parse_napx(napx);
  const ex::SimulationResult r = ex::run_simulation(cfg, kc, n, alpha, m);
  write_file(dir / "simulation.csv", ex::simulation_csv(r));
  json meta = config_summary(cfg, config);
  meta["command"] = "simulate";
  meta["scenario"] = {{"k_c", kc}, {"n_apx", ex::napx_label(n)}, {"alpha", alpha},
                      {"mode", ex::to_string(m)}};
  meta["duration"] = cfg.simulation.duration;
  meta["dt"] = cfg.simulation.dt;
  meta["samples"] = r.t.size();
  meta["stable"] = r.stable;
  meta["abscissa"] = finite_or_null(r.abscissa);
  meta["warnings"] = r.warnings;
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "simulate: " << r.t.size() << " samples, " << (r.stable ? "stable" : "UNSTABLE")
            << " -> " << dir.string() << '\n';
  return 0;
}

int cmd_verify(const std::string& config, std::optional<int> fuzz, std::uint64_t seed,
               const std::string& fault, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ex::ExperimentConfig cfg = ex::load_config(config);
  retrofit::verify::VerifyOptions opts;
  opts.fuzz_count = fuzz.value_or(cfg.fuzz_count);
  opts.seed = seed;
  if (fault == "rectifier-sign") {
    opts.inject_rectifier_fault = true;
  } else if (fault != "none") {
    throw retrofit::ConfigError("unknown fault '" + fault + "' (expected rectifier-sign)");
  }
  const auto results = retrofit::verify::run_verify(cfg, opts);
  const bool ok = retrofit::verify::all_passed(results);
  std::cout << retrofit::verify::format_table(results);
  std::cout << "verify: " << (ok ? "PASS" : "FAIL") << " in " << elapsed(t0) << " s\n";
  if (!out_dir.empty()) {
    const fs::path dir = prepare_dir(out_dir);
    json report = json::array();
    for (const auto& r : results) {
      report.push_back({{"name", r.name},
                        {"passed", r.passed},
                        {"instances", r.instances},
                        {"failures", r.failures},
                        {"worst", finite_or_null(r.worst)},
                        {"threshold", r.threshold},
                        {"seconds", r.seconds}});
    }
    json meta = config_summary(cfg, config);
    meta["command"] = "verify";
    meta["fuzz_count"] = opts.fuzz_count;
    meta["verify_seed"] = opts.seed;
    meta["inject_fault"] = fault;
    meta["passed"] = ok;
    meta["checks"] = report;
    write_file(dir / "metadata.json", meta.dump(2) + "\n");
    if (!ok) {
      write_file(dir / "failures.json", retrofit::verify::failures_json(results, opts) + "\n");
      std::cout << "failing instances written to " << (dir / "failures.json").string() << '\n';
    }
  } else if (!ok) {
    std::cout << retrofit::verify::failures_json(results, opts) << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrofit control experiments on oscillator networks"};
  app.require_subcommand(1);

  std::string config, out_dir;

  auto* sweep = app.add_subcommand("sweep", "Sweep k_c x n_apx x alpha; write errors.csv and performance.csv");
  sweep->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Output directory (default: output_dir of the config)");

  double kc = 0, alpha = 0.2;
  std::string napx = "8", mode = "retrofit";
  auto* sim = app.add_subcommand("simulate", "Impulse response at the first disturbance channel");
  sim->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
  sim->add_option("--kc", kc, "Boundary stiffness")->required()->check(CLI::NonNegativeNumber);
  sim->add_option("--napx", napx, "Model order: none, full or n >= 0")->required();
  sim->add_option("--alpha", alpha, "Control weight")->required()->check(CLI::PositiveNumber);
  sim->add_option("--mode", mode, "retrofit, direct or none")
      ->check(CLI::IsMember({"retrofit", "direct", "none"}));
  sim->add_option("--out", out_dir, "Output directory (default: output_dir of the config)");

  std::optional<int> fuzz;
  std::uint64_t seed = 1;
  std::string fault = "none";
  auto* ver = app.add_subcommand("verify", "Run the invariant suite; nonzero exit on failure");
  ver->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
  ver->add_option("--fuzz-count", fuzz, "Random instances per check (default: from config)")
      ->check(CLI::NonNegativeNumber);
  ver->add_option("--seed", seed, "Seed of the random instances");
  ver->add_option("--out", out_dir, "Directory for metadata.json and failures.json");
  ver->add_option("--inject-fault", fault, "Test hook: rectifier-sign")
      ->check(CLI::IsMember({"none", "rectifier-sign"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep) return cmd_sweep(config, out_dir);
    if (*sim) return cmd_simulate(config, kc, napx, alpha, mode, out_dir);
    if (*ver) return cmd_verify(config, fuzz, seed, fault, out_dir);
  } catch (const retrofit::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
