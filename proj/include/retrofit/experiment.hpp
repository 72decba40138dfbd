#pragma once

// Experiment pipelines behind the command-line tool: configuration,
// per-point scenario construction, parameter sweeps and impulse simulations.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "retrofit/oscnet.hpp"
#include "retrofit/retrofit.hpp"

namespace retrofit::experiment {

inline constexpr int kSchemaVersion = 1;

/// n_apx value meaning "no environment model" (G_apx = 0).
inline constexpr int kNoModel = -1;
/// n_apx value meaning "the full environment" (G_apx = G_env).
inline constexpr int kFullModel = -2;

enum class ControllerMode { Retrofit, Direct, None };

ControllerMode parse_mode(const std::string& s);
std::string to_string(ControllerMode m);

/// "none", "full" or the integer order.
std::string napx_label(int napx);
int parse_napx(const std::string& s);

struct SimulationSettings {
  double duration = 30.0;
  double dt = 1e-2;
};

struct ExperimentConfig {
  /// Either the benchmark preset or an explicit network.
  bool benchmark = true;
  oscnet::NetworkSpec network;
  oscnet::ChannelAssignment assignment = oscnet::benchmark_assignment();
  std::uint64_t topology_seed = 1;

  std::vector<double> kc_grid = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> napx_grid = {kNoModel, 0, 2, 8};
  std::vector<double> alpha_list = {0.2, 0.01};
  ControllerMode mode = ControllerMode::Retrofit;

  double epsilon = 1e-4;
  double gamma_tol = 1e-3;
  double norm_tol = 1e-10;
  double minreal_tol = 1e-8;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  SimulationSettings simulation;
  int fuzz_count = 20;
};

/// Parses a JSON document; unknown keys are rejected. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// The network at boundary stiffness kc.
oscnet::NetworkSpec network_at(const ExperimentConfig& cfg, double kc);

struct EnvironmentApproximation {
  EnvironmentModel apx;
  /// ||G_env - G_apx||_inf.
  double modeling_error = 0;
  /// Balanced-truncation bound; NaN when no reduction was performed.
  double error_bound = 0;
  Index order = 0;
};

/// Environment model of order napx by balanced truncation (napx >= 0),
/// the zero model (kNoModel) or the environment itself (kFullModel).
/// Marginal environments are reduced to a minimal realization first.
EnvironmentApproximation approximate_environment(const EnvironmentModel& env, Index nw,
                                                 Index nv, int napx, double norm_tol,
                                                 double minreal_tol);

/// H-infinity module designed on the new subsystem of G with apx.
synthesis::SynthesisResult design_module(const PartitionedPlant& g, const EnvironmentModel& apx,
                                         double alpha, double epsilon, double gamma_tol);

struct SweepRow {
  double k_c = 0;
  int n_apx = 0;
  double alpha = 0;
  double modeling_error = 0;
  double gamma_actual = 0;
  double gamma_hat = 0;
  double gamma_check = 0;
  bool stable_retrofit = false;
  bool stable_direct = false;
  double invariance_residual = 0;
  /// Empty when the point succeeded.
  std::string warning;
};

struct ErrorRow {
  double k_c = 0;
  int n_apx = 0;
  double modeling_error = 0;
  double error_bound = 0;
};

struct SweepResult {
  std::vector<ErrorRow> errors;
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
};

/// Number of worker threads: RETROFIT_CTL_THREADS if set, else the hardware
/// concurrency (at least 1).
unsigned worker_threads();

/// Evaluates every (k_c, n_apx, alpha) point; rows come back in grid order.
SweepResult run_sweep(const ExperimentConfig& cfg, unsigned threads = worker_threads());

std::string errors_csv(const SweepResult& r);
std::string performance_csv(const SweepResult& r);

struct SimulationResult {
  std::vector<double> t;
  /// samples x nz each.
  MatrixXd z, zhat, zcheck;
  bool stable = true;
  double abscissa = 0;
  std::vector<std::string> warnings;
};

/// Impulse at the first disturbance channel.
SimulationResult run_simulation(const ExperimentConfig& cfg, double kc, int napx, double alpha,
                                ControllerMode mode);

std::string simulation_csv(const SimulationResult& r);

/// Formats with 17 significant digits ("nan"/"inf" for non-finite values).
std::string format_double(double v);

}  // namespace retrofit::experiment
