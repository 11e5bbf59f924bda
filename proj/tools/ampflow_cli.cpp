// Command-line front end for the experiment harness.  One subcommand per
// experiment; flags override config-file values; the subcommand always
// determines the experiment kind.  Exit codes: 0 success, 1 assertion-class
// failure, 2 configuration error.

#include <cstdio>
#include <exception>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ampflow/experiments.hpp"

namespace {

using ampflow::ExperimentConfig;
using ampflow::ExperimentKind;

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.experiment = kind;
  switch (kind) {
    case ExperimentKind::Convergence:
    case ExperimentKind::PhaseTransition:
      break;  // n = 100, trials = 20
    case ExperimentKind::NoiseFloor:
      cfg.noise_rho = 0.01;
      break;
    case ExperimentKind::MdcScaling:
      cfg.n = 50;
      cfg.trials = 5;
      break;
    case ExperimentKind::RegularitySweep:
      cfg.n = 50;
      break;
    case ExperimentKind::SandwichAudit:
      cfg.n = 20;
      cfg.trials = 10;
      break;
  }
  return cfg;
}

std::vector<int> default_m_values(ExperimentKind kind, int n) {
  switch (kind) {
    case ExperimentKind::Convergence:
    case ExperimentKind::NoiseFloor:
      return {10 * n};
    case ExperimentKind::PhaseTransition: {
      std::vector<int> grid;
      for (int r = 1; r <= 12; ++r) grid.push_back(r * n);
      return grid;
    }
    case ExperimentKind::MdcScaling:
      return {10 * n, 50 * n, 200 * n};
    case ExperimentKind::RegularitySweep:
      return {20 * n};
    case ExperimentKind::SandwichAudit:
      return {200 * n};
  }
  return {10 * n};
}

struct Flags {
  int n = 0;
  std::vector<int> m;
  double alpha = 0.0;
  double rho = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
  double tol = 0.0;
  std::string out;
  std::string config;
  int workers = 0;
  int pairs = 0;
  int refine = 0;
  double eps = 0.0;
  int max_iters = 0;
  bool init_at_truth = false;
};

void add_common_options(CLI::App* sub, Flags& f) {
  sub->add_option("--n", f.n, "signal dimension");
  sub->add_option("--m", f.m,
                  "measurement count; repeat or list for a sweep");
  sub->add_option("--alpha", f.alpha, "step size in (0, 1]");
  sub->add_option("--rho", f.rho, "noise level: ||eta|| = rho * ||x_star||");
  sub->add_option("--trials", f.trials, "trials per m value");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--tol", f.tol, "solver stopping tolerance");
  sub->add_option("--out", f.out, "output file prefix");
  sub->add_option("--config", f.config, "key=value config file");
  sub->add_option("--workers", f.workers,
                  "worker threads (0 = hardware concurrency)");
  sub->add_option("--pairs", f.pairs,
                  "sampled pairs (concentration / audit experiments)");
  sub->add_option("--refine", f.refine, "local refinement steps");
  sub->add_option("--eps", f.eps, "relaxation epsilon in (0, 1)");
  sub->add_option("--max-iters", f.max_iters, "solver iteration cap");
  sub->add_flag("--init-at-truth", f.init_at_truth,
                "start the solver at x_star (debug)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Amplitude-flow phase retrieval solver and random-matrix "
      "concentration experiments"};
  app.require_subcommand(1);

  Flags f;
  static const char* kNames[] = {"convergence",  "noise-floor", "phase-transition",
                                 "mdc-scaling",  "regularity",  "sandwich"};
  static const char* kDescs[] = {
      "linear convergence rate of amplitude flow with spectral init",
      "recovery error floor under bounded measurement noise",
      "success rate across an m/n grid",
      "sup deviation of sign-weighted Gram operators vs their expectations",
      "local regularity inequality of the subgradient field",
      "semidefinite envelope sandwich and margin audit"};
  for (int i = 0; i < 6; ++i) {
    add_common_options(app.add_subcommand(kNames[i], kDescs[i]), f);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const ExperimentKind kind =
        ampflow::experiment_kind_from_string(sub->get_name());
    ExperimentConfig cfg = default_config(kind);
    if (sub->count("--config") > 0) {
      cfg = ampflow::parse_config_file(f.config, cfg);
    }
    cfg.experiment = kind;  // the subcommand is authoritative
    if (sub->count("--n") > 0) cfg.n = f.n;
    if (sub->count("--m") > 0) cfg.m_values = f.m;
    if (sub->count("--alpha") > 0) cfg.alpha = f.alpha;
    if (sub->count("--rho") > 0) cfg.noise_rho = f.rho;
    if (sub->count("--trials") > 0) cfg.trials = f.trials;
    if (sub->count("--seed") > 0) cfg.master_seed = f.seed;
    if (sub->count("--tol") > 0) cfg.tol = f.tol;
    if (sub->count("--out") > 0) cfg.output_path = f.out;
    if (sub->count("--workers") > 0) cfg.workers = f.workers;
    if (sub->count("--pairs") > 0) cfg.num_pairs = f.pairs;
    if (sub->count("--refine") > 0) cfg.refine_steps = f.refine;
    if (sub->count("--eps") > 0) cfg.eps = f.eps;
    if (sub->count("--max-iters") > 0) cfg.max_iters = f.max_iters;
    if (sub->count("--init-at-truth") > 0) cfg.init_at_truth = true;
    if (cfg.m_values.empty()) {
      cfg.m_values = default_m_values(kind, cfg.n);
    }
    ampflow::validate_config(cfg);

    const ampflow::ExperimentReport report = ampflow::run_experiment(cfg);

    const double total = std::accumulate(report.trial_seconds.begin(),
                                         report.trial_seconds.end(), 0.0);
    std::fprintf(stderr, "%s: %zu records, %.3f s total (%.3f s/record)\n",
                 ampflow::to_string(kind).c_str(),
                 report.trial_seconds.size(), total,
                 report.trial_seconds.empty()
                     ? 0.0
                     : total / static_cast<double>(report.trial_seconds.size()));

    if (cfg.output_path.empty()) {
      std::fputs(report.summary_json.c_str(), stdout);
    } else {
      for (const std::string& path : ampflow::write_report_files(report)) {
        std::fprintf(stderr, "wrote %s\n", path.c_str());
      }
    }
    if (report.assertion_failures > 0) {
      std::fprintf(stderr, "assertion-class failures: %d\n",
                   report.assertion_failures);
      return 1;
    }
    return 0;
  } catch (const ampflow::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
