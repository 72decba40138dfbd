#pragma once

// Invariant suite run by `retrofit-ctl verify`: rectifier kernel identity,
// robust stability over random admissible environments, cascade
// equivalence, the performance bound sandwich, invariance of the
// environment-side map and matrix identities behind the positive-feedback
// algebra. Each check reports its worst metric against a pinned threshold.

#include <cstdint>
#include <string>
#include <vector>

#include "retrofit/experiment.hpp"

namespace retrofit::verify {

struct CheckResult {
  std::string name;
  bool passed = true;
  int instances = 0;
  int failures = 0;
  /// Worst observed metric; `passed` compares it with `threshold`.
  double worst = 0;
  double threshold = 0;
  double seconds = 0;
  std::string detail;
  /// Violating instances as JSON objects, for replay.
  std::vector<std::string> failing;
};

struct VerifyOptions {
  int fuzz_count = 20;
  std::uint64_t seed = 1;
  /// Flip the sign of the rectifier v columns in the kernel checks.
  bool inject_rectifier_fault = false;
};

/// max_w ||XR(jw) G_(y,w,v)v(jw)|| over the default grid, for `plants`
/// random subsystems times `models` random models (every second unstable).
CheckResult check_kernel_identity(std::uint64_t seed, int plants, int models, bool fault);

/// Retrofit closed loops with `envs` admissible environments and `models`
/// models per subsystem; every loop must have deflated abscissa < -1e-9.
CheckResult check_robust_stability(std::uint64_t seed, int plants, int envs, int models);

/// ||T_direct - T_cascade|| / ||T_direct|| <= 1e-6 on random instances.
CheckResult check_cascade_equivalence(std::uint64_t seed, int count);

/// |g_check - g_hat| - 1e-9 <= g_actual <= g_hat + g_check + 1e-9.
CheckResult check_bound_sandwich(std::uint64_t seed, int count);

/// max_w ||G'_wv - G_wv|| <= 1e-8 on the default grid.
CheckResult check_invariance(std::uint64_t seed, int count);

/// Resolvent identities of I - PK checked on random complex matrices and
/// against the feedback interconnection on random systems.
CheckResult check_matrix_identities(std::uint64_t seed, int count);

/// Kernel, invariance, cascade and sandwich checks on the configured network
/// at its largest k_c.
std::vector<CheckResult> benchmark_checks(const experiment::ExperimentConfig& cfg, bool fault);

/// The full suite. With fuzz_count = 0 only deterministic checks run.
std::vector<CheckResult> run_verify(const experiment::ExperimentConfig& cfg,
                                    const VerifyOptions& opts);

bool all_passed(const std::vector<CheckResult>& results);

/// Plain-text pass/fail table.
std::string format_table(const std::vector<CheckResult>& results);

/// JSON document listing the violating instances of every failed check.
std::string failures_json(const std::vector<CheckResult>& results, const VerifyOptions& opts);

}  // namespace retrofit::verify
