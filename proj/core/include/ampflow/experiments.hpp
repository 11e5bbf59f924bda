#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampflow {

enum class ExperimentKind {
  Convergence,
  NoiseFloor,
  PhaseTransition,
  MdcScaling,
  RegularitySweep,
  SandwichAudit
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Invalid configuration or unusable output path; the CLI maps this to
/// exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Convergence;
  int n = 100;
  std::vector<int> m_values;
  double alpha = 1.0;
  double noise_rho = 0.0;
  int trials = 20;
  std::uint64_t master_seed = 42;
  std::string output_path;  // file prefix; empty writes nothing
  double tol = 1e-14;       // solver stopping tolerance

  // Harness extensions (all exposed as CLI flags / config keys).
  int max_iters = 500;
  int workers = 1;      // 0 = hardware concurrency
  int num_pairs = 200;  // concentration experiments
  int refine_steps = 50;
  double eps = 0.2;     // relaxation / sandwich epsilon
  bool init_at_truth = false;  // debug: start the solver at x_star
};

void validate_config(const ExperimentConfig& cfg);

/// Flat key=value config file ('#' comments and blank lines ignored).
/// Keys mirror ExperimentConfig fields; short CLI aliases (m, rho, seed,
/// out, pairs, refine) are accepted too.  m takes a comma-separated list.
ExperimentConfig parse_config_file(const std::string& path,
                                   ExperimentConfig base = ExperimentConfig{});
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

/// One output document: file name suffix plus full contents, assembled
/// deterministically so byte-identical reruns are checkable in memory.
struct OutputDocument {
  std::string name;  // e.g. "summary.json", "trace.csv"
  std::string contents;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string summary_json;  // config echo + per-trial records + aggregates
  std::vector<OutputDocument> outputs;  // summary.json first, then CSVs
  int assertion_failures = 0;
  std::vector<double> trial_seconds;  // wall clock; never serialized
};

/// Success threshold shared by the convergence-style experiments:
/// final dist <= 1e-5 * ||x_star||.
inline constexpr double kSuccessThreshold = 1e-5;

/// Rate-fit window: iterations with dist in [1e-10, 1e-2] * ||x_star||.
inline constexpr double kRateWindowLow = 1e-10;
inline constexpr double kRateWindowHigh = 1e-2;

ExperimentReport run_convergence(const ExperimentConfig& cfg);
ExperimentReport run_noise_floor(const ExperimentConfig& cfg);
ExperimentReport run_phase_transition(const ExperimentConfig& cfg);
ExperimentReport run_mdc_scaling(const ExperimentConfig& cfg);
ExperimentReport run_regularity_sweep(const ExperimentConfig& cfg);
ExperimentReport run_sandwich_audit(const ExperimentConfig& cfg);

/// Dispatch on cfg.experiment.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Writes report.outputs under the prefix cfg.output_path ("<prefix>.<name>"),
/// creating parent directories.  No-op when the prefix is empty.
std::vector<std::string> write_report_files(const ExperimentReport& report);

/// Least-squares slope fit of log(dist) vs t, exponentiated to a
/// per-iteration factor; NaN when the window holds fewer than two points.
double fit_contraction_factor(const std::vector<double>& dist_history,
                              double x_star_norm);

/// Pool-adjacent-violators isotonic (non-decreasing) fit.
std::vector<double> isotonic_fit(const std::vector<double>& values);

/// Deterministic worker pool: runs body(i) for i in [0, count) on `workers`
/// threads (0 = hardware concurrency).  Bodies must write only to their own
/// slot of any shared output.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace ampflow
