#include "ampflow/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "ampflow/concentration.hpp"
#include "ampflow/kernels.hpp"
#include "ampflow/linalg.hpp"
#include "ampflow/measurement.hpp"
#include "ampflow/rng.hpp"
#include "ampflow/solver.hpp"

namespace ampflow {
namespace {

using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + value +
                      "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" +
                      value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + value +
                      "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") {
    return true;
  }
  if (value == "0" || value == "false" || value == "no" || value == "off") {
    return false;
  }
  throw ConfigError("config key '" + key + "': not a boolean: '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_int(key, item));
  }
  if (out.empty()) {
    throw ConfigError("config key '" + key + "': empty list");
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

/// Experiment-defining parameters only.  The execution knobs (workers,
/// output_path) are deliberately excluded so that reruns under different
/// parallelism or output locations stay byte-identical.
json config_echo(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.experiment);
  j["n"] = cfg.n;
  j["m_values"] = cfg.m_values;
  j["alpha"] = cfg.alpha;
  j["noise_rho"] = cfg.noise_rho;
  j["trials"] = cfg.trials;
  j["master_seed"] = cfg.master_seed;
  j["tol"] = cfg.tol;
  j["max_iters"] = cfg.max_iters;
  j["num_pairs"] = cfg.num_pairs;
  j["refine_steps"] = cfg.refine_steps;
  j["eps"] = cfg.eps;
  j["init_at_truth"] = cfg.init_at_truth;
  return j;
}

/// Root stream for one (trial, m) record.  Derived from the master seed and
/// the record's own coordinates only, so other trials or m entries can be
/// added or removed without disturbing this record's draws.
Rng record_root(const ExperimentConfig& cfg, int trial, int m) {
  return Rng(cfg.master_seed)
      .child(static_cast<std::uint64_t>(trial))
      .child(static_cast<std::uint64_t>(m));
}

struct SolveOutcome {
  std::uint64_t ensemble_seed = 0;
  double eta_norm = 0.0;
  SolverTrace trace;
  double final_dist = kNaN;
  bool success = false;
  bool errored = false;
  std::string error;
};

/// Shared body of the solver-driven experiments: sample, init, solve.
/// Numeric failures (divergence in the underdetermined regime, slow spectral
/// gap in the initializer) are recorded as unsuccessful trials, not crashes.
SolveOutcome solve_one(const ExperimentConfig& cfg, int trial, int m) {
  SolveOutcome out;
  const Rng root = record_root(cfg, trial, m);
  out.ensemble_seed = root.child(0).key();
  Rng xstar_rng = root.child(1);
  const std::uint64_t noise_seed = root.child(2).key();
  try {
    const MeasurementEnsemble A = sample_ensemble(
        m, cfg.n, VarianceConvention::OneOverM, out.ensemble_seed);
    const Eigen::VectorXd x_star = unit_sphere_vector(xstar_rng, cfg.n);
    const Eigen::VectorXd eta = bounded_noise(m, cfg.noise_rho, 1.0, noise_seed);
    out.eta_norm = eta.norm();
    const PhaseRetrievalInstance inst = forward_model(A, x_star, eta);
    const Eigen::VectorXd x0 =
        cfg.init_at_truth ? x_star : spectral_init(A, inst.y);
    SolverConfig scfg;
    scfg.alpha = cfg.alpha;
    scfg.max_iters = cfg.max_iters;
    scfg.tol = cfg.tol;
    out.trace = solve(A, inst.y, x0, scfg, &x_star);
    out.final_dist = out.trace.dist_history.back();
    out.success = out.final_dist <= kSuccessThreshold;  // ||x_star|| = 1
  } catch (const std::runtime_error& e) {
    out.errored = true;
    out.error = e.what();
    out.success = false;
  }
  return out;
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

json nan_to_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

/// Assembles report.outputs with summary.json first, records sorted by
/// (m index, trial) by construction of the job indexing.
ExperimentReport finish_report(const ExperimentConfig& cfg, json aggregates,
                               std::vector<json> records, int failures,
                               std::vector<OutputDocument> csvs,
                               std::vector<double> trial_seconds) {
  ExperimentReport report;
  report.config = cfg;
  report.assertion_failures = failures;
  report.trial_seconds = std::move(trial_seconds);
  json summary;
  summary["aggregates"] = std::move(aggregates);
  summary["assertion_failures"] = failures;
  summary["config"] = config_echo(cfg);
  summary["records"] = std::move(records);
  report.summary_json = summary.dump(2) + "\n";
  report.outputs.push_back({"summary.json", report.summary_json});
  for (auto& doc : csvs) report.outputs.push_back(std::move(doc));
  return report;
}

int job_count(const ExperimentConfig& cfg) {
  return static_cast<int>(cfg.m_values.size()) * cfg.trials;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Convergence:
      return "convergence";
    case ExperimentKind::NoiseFloor:
      return "noise-floor";
    case ExperimentKind::PhaseTransition:
      return "phase-transition";
    case ExperimentKind::MdcScaling:
      return "mdc-scaling";
    case ExperimentKind::RegularitySweep:
      return "regularity";
    case ExperimentKind::SandwichAudit:
      return "sandwich";
  }
  return "convergence";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "convergence") return ExperimentKind::Convergence;
  if (name == "noise-floor") return ExperimentKind::NoiseFloor;
  if (name == "phase-transition") return ExperimentKind::PhaseTransition;
  if (name == "mdc-scaling") return ExperimentKind::MdcScaling;
  if (name == "regularity") return ExperimentKind::RegularitySweep;
  if (name == "sandwich") return ExperimentKind::SandwichAudit;
  throw ConfigError("unknown experiment: '" + name + "'");
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("n must be >= 1");
  if (cfg.m_values.empty()) throw ConfigError("at least one m value required");
  for (int m : cfg.m_values) {
    if (m < 1) throw ConfigError("m values must be >= 1");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) {
    throw ConfigError("alpha must lie in (0, 1]");
  }
  if (cfg.noise_rho < 0.0) throw ConfigError("noise_rho must be >= 0");
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  if (!(cfg.tol > 0.0)) throw ConfigError("tol must be > 0");
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (cfg.workers < 0) throw ConfigError("workers must be >= 0");
  if (cfg.num_pairs < 1) throw ConfigError("num_pairs must be >= 1");
  if (cfg.refine_steps < 0) throw ConfigError("refine_steps must be >= 0");
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) {
    throw ConfigError("eps must lie in (0, 1)");
  }
  const bool solver_based = cfg.experiment == ExperimentKind::Convergence ||
                            cfg.experiment == ExperimentKind::NoiseFloor ||
                            cfg.experiment == ExperimentKind::PhaseTransition;
  if (solver_based) {
    for (int m : cfg.m_values) {
      if (m < cfg.n) {
        throw ConfigError(
            "spectral initialization requires m >= n for every m value");
      }
    }
  }
  const bool ascending = cfg.experiment == ExperimentKind::PhaseTransition ||
                         cfg.experiment == ExperimentKind::MdcScaling;
  if (ascending) {
    for (std::size_t i = 1; i < cfg.m_values.size(); ++i) {
      if (cfg.m_values[i] <= cfg.m_values[i - 1]) {
        throw ConfigError("m values must be strictly ascending");
      }
    }
  }
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "experiment") {
    cfg.experiment = experiment_kind_from_string(value);
  } else if (key == "n") {
    cfg.n = parse_int(key, value);
  } else if (key == "m_values" || key == "m") {
    cfg.m_values = parse_int_list(key, value);
  } else if (key == "alpha") {
    cfg.alpha = parse_double(key, value);
  } else if (key == "noise_rho" || key == "rho") {
    cfg.noise_rho = parse_double(key, value);
  } else if (key == "trials") {
    cfg.trials = parse_int(key, value);
  } else if (key == "master_seed" || key == "seed") {
    cfg.master_seed = parse_u64(key, value);
  } else if (key == "output_path" || key == "out") {
    cfg.output_path = value;
  } else if (key == "tol") {
    cfg.tol = parse_double(key, value);
  } else if (key == "max_iters") {
    cfg.max_iters = parse_int(key, value);
  } else if (key == "workers") {
    cfg.workers = parse_int(key, value);
  } else if (key == "num_pairs" || key == "pairs") {
    cfg.num_pairs = parse_int(key, value);
  } else if (key == "refine_steps" || key == "refine") {
    cfg.refine_steps = parse_int(key, value);
  } else if (key == "eps") {
    cfg.eps = parse_double(key, value);
  } else if (key == "init_at_truth") {
    cfg.init_at_truth = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key: '" + key + "'");
  }
}

ExperimentConfig parse_config_file(const std::string& path,
                                   ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    }
    apply_config_entry(base, key, value);
  }
  return base;
}

double fit_contraction_factor(const std::vector<double>& dist_history,
                              double x_star_norm) {
  std::vector<double> ts, ys;
  for (std::size_t t = 0; t < dist_history.size(); ++t) {
    const double d = dist_history[t];
    if (d >= kRateWindowLow * x_star_norm && d <= kRateWindowHigh * x_star_norm) {
      ts.push_back(static_cast<double>(t));
      ys.push_back(std::log(d));
    }
  }
  if (ts.size() < 2) return kNaN;
  const double nn = static_cast<double>(ts.size());
  const double mt = std::accumulate(ts.begin(), ts.end(), 0.0) / nn;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / nn;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    num += (ts[i] - mt) * (ys[i] - my);
    den += (ts[i] - mt) * (ts[i] - mt);
  }
  return std::exp(num / den);
}

std::vector<double> isotonic_fit(const std::vector<double>& values) {
  std::vector<double> level;
  std::vector<int> count;
  for (double v : values) {
    level.push_back(v);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double merged =
          (level[level.size() - 2] * count[count.size() - 2] +
           level.back() * count.back()) /
          (count[count.size() - 2] + count.back());
      count[count.size() - 2] += count.back();
      level[level.size() - 2] = merged;
      level.pop_back();
      count.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t b = 0; b < level.size(); ++b) {
    out.insert(out.end(), static_cast<std::size_t>(count[b]), level[b]);
  }
  return out;
}

void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  std::size_t w = workers == 0
                      ? std::max(1u, std::thread::hardware_concurrency())
                      : static_cast<std::size_t>(workers);
  w = std::min(w, count);
  if (w <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto loop = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t) pool.emplace_back(loop);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

ExperimentReport run_convergence(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const int jobs = job_count(cfg);
  std::vector<json> records(jobs);
  std::vector<double> secs(jobs, 0.0);
  std::vector<int> fails(jobs, 0);
  std::vector<std::string> trace_rows(jobs), rate_rows(jobs);

  parallel_for(static_cast<std::size_t>(jobs), cfg.workers, [&](std::size_t j) {
    const Timer timer;
    const int m_index = static_cast<int>(j) / cfg.trials;
    const int trial = static_cast<int>(j) % cfg.trials;
    const int m = cfg.m_values[static_cast<std::size_t>(m_index)];
    const SolveOutcome out = solve_one(cfg, trial, m);

    double fitted = kNaN;
    bool rate_bound_holds = true;
    if (!out.errored) {
      fitted = fit_contraction_factor(out.trace.dist_history, 1.0);
      // The (1 - alpha/2) factor is asserted as an upper bound on the fitted
      // contraction, and only where it applies: successful noiseless runs.
      if (cfg.noise_rho == 0.0 && out.success && !std::isnan(fitted)) {
        rate_bound_holds = fitted <= (1.0 - cfg.alpha / 2.0) + 1e-9;
        if (!rate_bound_holds) fails[j] = 1;
      }
    }

    json rec;
    rec["m"] = m;
    rec["trial"] = trial;
    rec["seed"] = out.ensemble_seed;
    rec["success"] = out.success;
    rec["final_dist"] = nan_to_null(out.final_dist);
    rec["fitted_factor"] = nan_to_null(fitted);
    rec["rate_bound_holds"] = rate_bound_holds;
    if (out.errored) {
      rec["error"] = out.error;
      rec["iterations"] = nullptr;
    } else {
      rec["iterations"] = out.trace.iterations;
      rec["termination"] =
          out.trace.termination == Termination::Converged ? "converged"
                                                          : "max-iters";
      rec["final_objective"] = out.trace.objective_history.back();
    }
    records[j] = std::move(rec);

    std::ostringstream trace_csv, rate_csv;
    for (std::size_t t = 0; t < out.trace.objective_history.size(); ++t) {
      trace_csv << m << ',' << trial << ',' << t << ','
                << format_double(out.trace.dist_history[t]) << ','
                << format_double(out.trace.objective_history[t]) << '\n';
    }
    rate_csv << m << ',' << trial << ','
             << (std::isnan(fitted) ? std::string() : format_double(fitted))
             << ',' << (out.success ? 1 : 0) << '\n';
    trace_rows[j] = trace_csv.str();
    rate_rows[j] = rate_csv.str();
    secs[j] = timer.seconds();
  });

  int success_count = 0, errored = 0, violations = 0;
  double worst_fitted = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < jobs; ++j) {
    if (records[j]["success"].get<bool>()) ++success_count;
    if (records[j].contains("error")) ++errored;
    violations += fails[j];
    const auto& f = records[j]["fitted_factor"];
    if (!f.is_null() && records[j]["success"].get<bool>()) {
      worst_fitted = std::max(worst_fitted, f.get<double>());
    }
  }
  json aggregates;
  aggregates["success_count"] = success_count;
  aggregates["trials_total"] = jobs;
  aggregates["errored_trials"] = errored;
  aggregates["rate_violations"] = violations;
  aggregates["worst_fitted_factor"] =
      std::isinf(worst_fitted) ? json(nullptr) : json(worst_fitted);

  std::string trace_csv = "m,trial,iter,dist,objective\n";
  std::string rate_csv = "m,trial,fitted_factor,success\n";
  for (int j = 0; j < jobs; ++j) {
    trace_csv += trace_rows[j];
    rate_csv += rate_rows[j];
  }
  std::vector<OutputDocument> csvs;
  csvs.push_back({"trace.csv", std::move(trace_csv)});
  csvs.push_back({"rates.csv", std::move(rate_csv)});
  return finish_report(cfg, std::move(aggregates), std::move(records),
                       violations, std::move(csvs), std::move(secs));
}

ExperimentReport run_noise_floor(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const int jobs = job_count(cfg);
  std::vector<json> records(jobs);
  std::vector<double> secs(jobs, 0.0);
  std::vector<int> fails(jobs, 0);
  std::vector<std::string> rows(jobs);
  std::vector<double> min_dists(jobs, kNaN);

  parallel_for(static_cast<std::size_t>(jobs), cfg.workers, [&](std::size_t j) {
    const Timer timer;
    const int m_index = static_cast<int>(j) / cfg.trials;
    const int trial = static_cast<int>(j) % cfg.trials;
    const int m = cfg.m_values[static_cast<std::size_t>(m_index)];
    const SolveOutcome out = solve_one(cfg, trial, m);

    const double floor = 4.0 * out.eta_norm;
    double min_dist = kNaN;
    bool floor_holds = true;
    if (!out.errored) {
      min_dist = *std::min_element(out.trace.dist_history.begin(),
                                   out.trace.dist_history.end());
      // The floor assertion is only meaningful with noise; rho = 0 reduces
      // to a convergence run scored by the success threshold instead.
      if (cfg.noise_rho > 0.0) {
        floor_holds = min_dist <= floor;
      } else {
        floor_holds = out.final_dist <= kSuccessThreshold;
      }
    } else {
      floor_holds = false;
    }
    if (!floor_holds) fails[j] = 1;
    min_dists[j] = min_dist;

    json rec;
    rec["m"] = m;
    rec["trial"] = trial;
    rec["seed"] = out.ensemble_seed;
    rec["eta_norm"] = out.eta_norm;
    rec["min_dist"] = nan_to_null(min_dist);
    rec["floor"] = floor;
    rec["floor_holds"] = floor_holds;
    rec["final_dist"] = nan_to_null(out.final_dist);
    if (out.errored) rec["error"] = out.error;
    records[j] = std::move(rec);

    std::ostringstream row;
    row << m << ',' << trial << ',' << format_double(out.eta_norm) << ','
        << format_double(min_dist) << ',' << format_double(floor) << ','
        << (floor_holds ? 1 : 0) << '\n';
    rows[j] = row.str();
    secs[j] = timer.seconds();
  });

  int violations = 0;
  for (int f : fails) violations += f;
  json aggregates;
  aggregates["floor_violations"] = violations;
  aggregates["trials_total"] = jobs;
  json medians = json::array();
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    std::vector<double> per_m;
    for (int t = 0; t < cfg.trials; ++t) {
      const double d = min_dists[mi * cfg.trials + static_cast<std::size_t>(t)];
      if (!std::isnan(d)) per_m.push_back(d);
    }
    medians.push_back(nan_to_null(median(per_m)));
  }
  aggregates["median_min_dist_by_m"] = std::move(medians);

  std::string csv = "m,trial,eta_norm,min_dist,floor,floor_holds\n";
  for (const auto& r : rows) csv += r;
  std::vector<OutputDocument> csvs;
  csvs.push_back({"floors.csv", std::move(csv)});
  return finish_report(cfg, std::move(aggregates), std::move(records),
                       violations, std::move(csvs), std::move(secs));
}

ExperimentReport run_phase_transition(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const int jobs = job_count(cfg);
  std::vector<json> records(jobs);
  std::vector<double> secs(jobs, 0.0);
  std::vector<int> successes(jobs, 0);

  parallel_for(static_cast<std::size_t>(jobs), cfg.workers, [&](std::size_t j) {
    const Timer timer;
    const int m_index = static_cast<int>(j) / cfg.trials;
    const int trial = static_cast<int>(j) % cfg.trials;
    const int m = cfg.m_values[static_cast<std::size_t>(m_index)];
    const SolveOutcome out = solve_one(cfg, trial, m);
    successes[j] = out.success ? 1 : 0;

    json rec;
    rec["m"] = m;
    rec["m_over_n"] = static_cast<double>(m) / cfg.n;
    rec["trial"] = trial;
    rec["seed"] = out.ensemble_seed;
    rec["success"] = out.success;
    rec["final_dist"] = nan_to_null(out.final_dist);
    if (out.errored) {
      rec["error"] = out.error;
    } else {
      rec["iterations"] = out.trace.iterations;
    }
    records[j] = std::move(rec);
    secs[j] = timer.seconds();
  });

  std::vector<double> rates;
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    int ok = 0;
    for (int t = 0; t < cfg.trials; ++t) {
      ok += successes[mi * static_cast<std::size_t>(cfg.trials) +
                      static_cast<std::size_t>(t)];
    }
    rates.push_back(static_cast<double>(ok) / cfg.trials);
  }
  const std::vector<double> smoothed = isotonic_fit(rates);
  double max_gap = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    max_gap = std::max(max_gap, std::abs(rates[i] - smoothed[i]));
  }

  json aggregates;
  json ratios = json::array();
  for (int m : cfg.m_values) {
    ratios.push_back(static_cast<double>(m) / cfg.n);
  }
  aggregates["m_over_n"] = std::move(ratios);
  aggregates["success_rates"] = rates;
  aggregates["smoothed_rates"] = smoothed;
  aggregates["max_isotonic_gap"] = max_gap;

  std::string csv = "m_over_n,success_rate\n";
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    csv += format_double(static_cast<double>(cfg.m_values[mi]) / cfg.n) + "," +
           format_double(rates[mi]) + "\n";
  }
  std::vector<OutputDocument> csvs;
  csvs.push_back({"rates.csv", std::move(csv)});
  return finish_report(cfg, std::move(aggregates), std::move(records), 0,
                       std::move(csvs), std::move(secs));
}

ExperimentReport run_mdc_scaling(const ExperimentConfig& cfg) {
  validate_config(cfg);
  static constexpr DeviationFamily kFamilies[] = {
      DeviationFamily::FullMDC, DeviationFamily::PlusPlus,
      DeviationFamily::MinusMinus, DeviationFamily::PlusMinus,
      DeviationFamily::MinusPlus};
  const int jobs = job_count(cfg);
  std::vector<json> records(jobs);
  std::vector<double> secs(jobs, 0.0);
  std::vector<std::string> scaling_rows(jobs);
  std::vector<std::vector<OutputDocument>> pair_docs(jobs);
  // refined_max_dev per (job, family), for the monotonicity aggregate.
  std::vector<std::array<double, 5>> refined(jobs);

  parallel_for(static_cast<std::size_t>(jobs), cfg.workers, [&](std::size_t j) {
    const Timer timer;
    const int m_index = static_cast<int>(j) / cfg.trials;
    const int trial = static_cast<int>(j) % cfg.trials;
    const int m = cfg.m_values[static_cast<std::size_t>(m_index)];
    const Rng root = record_root(cfg, trial, m);
    const std::uint64_t ensemble_seed = root.child(0).key();
    const std::uint64_t pair_seed = root.child(3).key();
    const MeasurementEnsemble A = sample_ensemble(
        m, cfg.n, VarianceConvention::OneOverM, ensemble_seed);

    json rec;
    rec["m"] = m;
    rec["m_over_n"] = static_cast<double>(m) / cfg.n;
    rec["trial"] = trial;
    rec["seed"] = ensemble_seed;
    json families;
    std::ostringstream scaling;
    for (std::size_t f = 0; f < 5; ++f) {
      // Same pair_seed for every family: all five deviations are evaluated
      // on the same sampled (x, y) pairs.
      std::ostringstream pair_csv;
      pair_csv << "pair_index,theta,deviation\n";
      const ConcentrationReport rep = empirical_sup_deviation(
          A, kFamilies[f], cfg.num_pairs, cfg.refine_steps, pair_seed,
          SupSearchBudget{}, [&](const PairDeviation& p) {
            pair_csv << p.pair_index << ',' << format_double(p.theta) << ','
                     << format_double(p.deviation) << '\n';
          });
      refined[j][f] = rep.refined_max_dev;
      families[to_string(kFamilies[f])] = json::parse(rep.to_json());
      scaling << format_double(static_cast<double>(m) / cfg.n) << ','
              << to_string(kFamilies[f]) << ','
              << format_double(rep.refined_max_dev) << '\n';
      pair_docs[j].push_back({"pairs-m" + std::to_string(m) + "-t" +
                                  std::to_string(trial) + "-" +
                                  to_string(kFamilies[f]) + ".csv",
                              pair_csv.str()});
    }
    rec["families"] = std::move(families);
    records[j] = std::move(rec);
    scaling_rows[j] = scaling.str();
    secs[j] = timer.seconds();
  });

  json aggregates;
  json per_family;
  for (std::size_t f = 0; f < 5; ++f) {
    int monotone = 0;
    double worst_at_largest_m = 0.0;
    const auto trials = static_cast<std::size_t>(cfg.trials);
    for (std::size_t t = 0; t < trials; ++t) {
      bool strictly_decreasing = true;
      for (std::size_t mi = 1; mi < cfg.m_values.size(); ++mi) {
        const double prev = refined[(mi - 1) * trials + t][f];
        const double cur = refined[mi * trials + t][f];
        if (!(cur < prev)) strictly_decreasing = false;
      }
      if (strictly_decreasing) ++monotone;
      worst_at_largest_m = std::max(
          worst_at_largest_m,
          refined[(cfg.m_values.size() - 1) * trials + t][f]);
    }
    json fam;
    fam["strictly_decreasing_trials"] = monotone;
    fam["trials"] = cfg.trials;
    fam["worst_refined_at_largest_m"] = worst_at_largest_m;
    per_family[to_string(kFamilies[f])] = std::move(fam);
  }
  aggregates["families"] = std::move(per_family);

  std::string csv = "m_over_n,family,refined_max_dev\n";
  for (const auto& r : scaling_rows) csv += r;
  std::vector<OutputDocument> csvs;
  csvs.push_back({"scaling.csv", std::move(csv)});
  for (auto& docs : pair_docs) {
    for (auto& d : docs) csvs.push_back(std::move(d));
  }
  return finish_report(cfg, std::move(aggregates), std::move(records), 0,
                       std::move(csvs), std::move(secs));
}

ExperimentReport run_regularity_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  static constexpr double kRadii[] = {1e-4, 1e-3};
  const int jobs = job_count(cfg);
  std::vector<json> records(jobs);
  std::vector<double> secs(jobs, 0.0);
  std::vector<int> fails(jobs, 0);
  std::vector<std::string> rows(jobs);

  parallel_for(static_cast<std::size_t>(jobs), cfg.workers, [&](std::size_t j) {
    const Timer timer;
    const int m_index = static_cast<int>(j) / cfg.trials;
    const int trial = static_cast<int>(j) % cfg.trials;
    const int m = cfg.m_values[static_cast<std::size_t>(m_index)];
    const Rng root = record_root(cfg, trial, m);
    const std::uint64_t ensemble_seed = root.child(0).key();
    Rng xstar_rng = root.child(1);
    const std::uint64_t noise_seed = root.child(2).key();
    Rng sample_rng = root.child(3);

    const MeasurementEnsemble A = sample_ensemble(
        m, cfg.n, VarianceConvention::OneOverM, ensemble_seed);
    const Eigen::VectorXd x_star = unit_sphere_vector(xstar_rng, cfg.n);
    const Eigen::VectorXd eta =
        bounded_noise(m, cfg.noise_rho, 1.0, noise_seed);
    const double eta_norm = eta.norm();
    const PhaseRetrievalInstance inst = forward_model(A, x_star, eta);

    int violations = 0;
    int disagreements = 0;
    double worst_ratio = 0.0;
    std::ostringstream row;
    for (double r : kRadii) {
      for (int branch = 0; branch < 2; ++branch) {
        int local_violations = 0;
        double local_worst = 0.0;
        for (int s = 0; s < cfg.num_pairs; ++s) {
          const Eigen::VectorXd dir = unit_sphere_vector(sample_rng, cfg.n);
          const Eigen::VectorXd x =
              (branch == 0 ? x_star : -x_star) + r * dir;
          const RegularityReport rep =
              regularity_check(A, inst.y, x, x_star, eta_norm);
          if (!rep.holds) ++local_violations;
          // Noiseless: the norm form and the inner-product form are exact
          // algebraic restatements, so they must agree bitwise-stably.
          if (eta_norm == 0.0 && rep.holds != rep.rc_inner_product_form) {
            ++disagreements;
          }
          if (rep.rhs > 0.0) {
            local_worst = std::max(local_worst, rep.lhs / rep.rhs);
          }
        }
        violations += local_violations;
        worst_ratio = std::max(worst_ratio, local_worst);
        row << m << ',' << trial << ',' << format_double(r) << ','
            << (branch == 0 ? "minus" : "plus") << ',' << local_violations
            << ',' << format_double(local_worst) << '\n';
      }
    }
    fails[j] = violations + disagreements;

    json rec;
    rec["m"] = m;
    rec["trial"] = trial;
    rec["seed"] = ensemble_seed;
    rec["eta_norm"] = eta_norm;
    rec["samples_per_branch"] = cfg.num_pairs;
    rec["violations"] = violations;
    rec["inner_form_disagreements"] = disagreements;
    rec["worst_ratio"] = worst_ratio;
    records[j] = std::move(rec);
    rows[j] = row.str();
    secs[j] = timer.seconds();
  });

  int total_failures = 0;
  int total_violations = 0, total_disagreements = 0;
  double worst = 0.0;
  for (int j = 0; j < jobs; ++j) {
    total_failures += fails[j];
    total_violations += records[j]["violations"].get<int>();
    total_disagreements += records[j]["inner_form_disagreements"].get<int>();
    worst = std::max(worst, records[j]["worst_ratio"].get<double>());
  }
  json aggregates;
  aggregates["total_checks"] = jobs * cfg.num_pairs * 4;
  aggregates["violations"] = total_violations;
  aggregates["inner_form_disagreements"] = total_disagreements;
  aggregates["worst_ratio"] = worst;

  std::string csv = "m,trial,r,branch,violations,worst_ratio\n";
  for (const auto& r : rows) csv += r;
  std::vector<OutputDocument> csvs;
  csvs.push_back({"margins.csv", std::move(csv)});
  return finish_report(cfg, std::move(aggregates), std::move(records),
                       total_failures, std::move(csvs), std::move(secs));
}

ExperimentReport run_sandwich_audit(const ExperimentConfig& cfg) {
  validate_config(cfg);
  // Deterministic semidefinite claims get a small tolerance covering the
  // power-iteration estimate, not a statistical slack.
  constexpr double kSandwichSlack = 1e-6;
  const int jobs = job_count(cfg);
  std::vector<json> records(jobs);
  std::vector<double> secs(jobs, 0.0);
  std::vector<int> fails(jobs, 0);
  std::vector<std::string> rows(jobs);

  parallel_for(static_cast<std::size_t>(jobs), cfg.workers, [&](std::size_t j) {
    const Timer timer;
    const int m_index = static_cast<int>(j) / cfg.trials;
    const int trial = static_cast<int>(j) % cfg.trials;
    const int m = cfg.m_values[static_cast<std::size_t>(m_index)];
    const Rng root = record_root(cfg, trial, m);
    const std::uint64_t ensemble_seed = root.child(0).key();
    Rng pair_rng = root.child(1);
    const std::uint64_t gbound_seed = root.child(3).key();

    const MeasurementEnsemble V =
        sample_ensemble(m, cfg.n, VarianceConvention::Unit, ensemble_seed);
    const ThetaMembership theta = theta_membership(V);

    int sandwich_violations = 0;
    double worst_sandwich = 0.0;  // most negative min eigenvalue seen
    for (int p = 0; p < cfg.num_pairs; ++p) {
      const Eigen::VectorXd x = unit_sphere_vector(pair_rng, cfg.n);
      const Eigen::VectorXd y = unit_sphere_vector(pair_rng, cfg.n);
      const Eigen::VectorXd w =
          family_weights(DeviationFamily::PlusMinus, V.entries() * x,
                         V.entries() * y);
      const Eigen::MatrixXd mid =
          V.entries().transpose() * w.asDiagonal() * V.entries();
      const Eigen::MatrixXd up = g_matrix(V, x, y, cfg.eps, EnvelopeSide::Up);
      const Eigen::MatrixXd low = g_matrix(V, x, y, cfg.eps, EnvelopeSide::Low);
      const double upper_gap =
          min_eigenvalue(LinearOperator::from_matrix(up - mid), 1e-8, 20000);
      const double lower_gap =
          min_eigenvalue(LinearOperator::from_matrix(mid - low), 1e-8, 20000);
      worst_sandwich = std::min({worst_sandwich, upper_gap, lower_gap});
      if (upper_gap < -kSandwichSlack || lower_gap < -kSandwichSlack) {
        ++sandwich_violations;
      }
    }
    fails[j] = sandwich_violations;

    const GBoundReport gb =
        g_upper_bound_check(V, cfg.eps, cfg.num_pairs, gbound_seed);

    json rec;
    rec["m"] = m;
    rec["trial"] = trial;
    rec["seed"] = ensemble_seed;
    rec["in_theta"] = theta.in_theta;
    rec["theta_norm"] = theta.norm;
    rec["theta_max_row_norm"] = theta.max_row_norm;
    rec["sandwich_violations"] = sandwich_violations;
    rec["worst_sandwich_gap"] = worst_sandwich;
    json gbj;
    gbj["worst_upper_margin"] = gb.worst_upper_margin;
    gbj["worst_lower_margin"] = gb.worst_lower_margin;
    gbj["all_within_slack"] = gb.all_within_slack;
    gbj["slack"] = gb.slack;
    rec["gbound"] = std::move(gbj);
    records[j] = std::move(rec);

    std::ostringstream row;
    row << m << ',' << trial << ',' << (theta.in_theta ? 1 : 0) << ','
        << format_double(gb.worst_upper_margin) << ','
        << format_double(gb.worst_lower_margin) << ',' << sandwich_violations
        << '\n';
    rows[j] = row.str();
    secs[j] = timer.seconds();
  });

  int total_violations = 0, in_theta_count = 0, within_slack = 0;
  double worst_up = -std::numeric_limits<double>::infinity();
  double worst_low = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < jobs; ++j) {
    total_violations += fails[j];
    if (records[j]["in_theta"].get<bool>()) {
      ++in_theta_count;
      worst_up = std::max(
          worst_up, records[j]["gbound"]["worst_upper_margin"].get<double>());
      worst_low = std::max(
          worst_low, records[j]["gbound"]["worst_lower_margin"].get<double>());
    }
    if (records[j]["gbound"]["all_within_slack"].get<bool>()) ++within_slack;
  }
  json aggregates;
  aggregates["sandwich_violations"] = total_violations;
  aggregates["trials_total"] = jobs;
  aggregates["in_theta_count"] = in_theta_count;
  aggregates["gbound_within_slack_count"] = within_slack;
  aggregates["worst_upper_margin_in_theta"] =
      std::isinf(worst_up) ? json(nullptr) : json(worst_up);
  aggregates["worst_lower_margin_in_theta"] =
      std::isinf(worst_low) ? json(nullptr) : json(worst_low);

  std::string csv =
      "m,trial,in_theta,upper_margin,lower_margin,sandwich_violations\n";
  for (const auto& r : rows) csv += r;
  std::vector<OutputDocument> csvs;
  csvs.push_back({"margins.csv", std::move(csv)});
  return finish_report(cfg, std::move(aggregates), std::move(records),
                       total_violations, std::move(csvs), std::move(secs));
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::Convergence:
      return run_convergence(cfg);
    case ExperimentKind::NoiseFloor:
      return run_noise_floor(cfg);
    case ExperimentKind::PhaseTransition:
      return run_phase_transition(cfg);
    case ExperimentKind::MdcScaling:
      return run_mdc_scaling(cfg);
    case ExperimentKind::RegularitySweep:
      return run_regularity_sweep(cfg);
    case ExperimentKind::SandwichAudit:
      return run_sandwich_audit(cfg);
  }
  throw ConfigError("unknown experiment kind");
}

std::vector<std::string> write_report_files(const ExperimentReport& report) {
  std::vector<std::string> written;
  if (report.config.output_path.empty()) return written;
  const std::filesystem::path prefix(report.config.output_path);
  if (prefix.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(prefix.parent_path(), ec);
    if (ec) {
      throw ConfigError("cannot create output directory: " +
                        prefix.parent_path().string());
    }
  }
  for (const auto& doc : report.outputs) {
    const std::string path = report.config.output_path + "." + doc.name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file: " + path);
    out << doc.contents;
    if (!out) throw ConfigError("failed writing output file: " + path);
    written.push_back(path);
  }
  return written;
}

}  // namespace ampflow
