#include "ampflow/solver.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ampflow/linalg.hpp"
#include "ampflow/rng.hpp"

namespace ampflow {
namespace {

constexpr std::uint64_t kSpectralInitStream = 0x51C7;

void validate_solver_config(const SolverConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) {
    throw std::invalid_argument("solver step size must satisfy 0 < alpha <= 1");
  }
  if (cfg.max_iters < 0 || cfg.tol < 0.0) {
    throw std::invalid_argument("solver max_iters and tol must be nonnegative");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double objective(const MeasurementEnsemble& A, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& x) {
  if (y.size() != A.m() || x.size() != A.n()) {
    throw std::invalid_argument("objective dimension mismatch");
  }
  return 0.5 * ((A.entries() * x).cwiseAbs() - y).squaredNorm();
}

Eigen::VectorXd subgradient(const MeasurementEnsemble& A,
                            const Eigen::VectorXd& y,
                            const Eigen::VectorXd& x) {
  if (y.size() != A.m() || x.size() != A.n()) {
    throw std::invalid_argument("subgradient dimension mismatch");
  }
  const SignSelector signs = sign_pattern(A, x);
  const Eigen::VectorXd residual =
      apply_signed(A, signs, x) - y;  // |Ax| - y
  return apply_signed_adjoint(A, signs, residual);
}

DistResult dist_signed(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& x_star) {
  const double minus = (x - x_star).norm();
  const double plus = (x + x_star).norm();
  if (minus <= plus) return {minus, SignBranch::Minus};
  return {plus, SignBranch::Plus};
}

double dist(const Eigen::VectorXd& x, const Eigen::VectorXd& x_star) {
  return dist_signed(x, x_star).value;
}

Eigen::VectorXd signed_target(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& x_star) {
  if (dist_signed(x, x_star).branch == SignBranch::Minus) return x - x_star;
  return x + x_star;
}

Eigen::VectorXd spectral_init(const MeasurementEnsemble& A,
                              const Eigen::VectorXd& y) {
  if (A.convention() != VarianceConvention::OneOverM) {
    throw std::invalid_argument(
        "spectral_init requires the OneOverM convention");
  }
  if (A.m() < A.n()) {
    throw std::invalid_argument("spectral_init requires m >= n");
  }
  if (y.size() != A.m()) {
    throw std::invalid_argument("spectral_init dimension mismatch");
  }
  const Eigen::VectorXd weights = y.cwiseProduct(y);
  // The explicit return type materializes the product before the lambda's
  // temporaries go out of scope; a deduced expression type would dangle.
  const LinearOperator D = LinearOperator::symmetric(
      A.n(), [&A, &weights](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        return A.entries().transpose() *
               weights.cwiseProduct(A.entries() * z).eval();
      });
  const EigenPairEstimate top = power_eigenpair(
      D, 1e-10, 200, Rng(A.seed()).child(kSpectralInitStream).key());
  return y.norm() * top.vector;
}

SolverTrace solve(const MeasurementEnsemble& A, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& x0, const SolverConfig& cfg,
                  const Eigen::VectorXd* x_star) {
  validate_solver_config(cfg);
  if (y.size() != A.m() || x0.size() != A.n() ||
      (x_star && x_star->size() != A.n())) {
    throw std::invalid_argument("solve dimension mismatch");
  }

  SolverTrace trace;
  const int keep = cfg.store_every;

  Eigen::VectorXd x = x0;
  double f_prev = objective(A, y, x);
  trace.objective_history.push_back(f_prev);
  if (x_star) trace.dist_history.push_back(dist(x, *x_star));
  if (keep > 0) trace.iterates.push_back(x);
  trace.termination = Termination::MaxIters;
  int last_stored = 0;
  if (f_prev == 0.0) {
    // Exact fixed point (e.g. started at the noiseless truth): the
    // subgradient vanishes, so report convergence in zero iterations.
    trace.termination = Termination::Converged;
    return trace;
  }

  for (int t = 1; t <= cfg.max_iters; ++t) {
    // One descent step; Ax is computed once and reused for the sign
    // pattern, the residual, and the objective.
    const Eigen::VectorXd ax = A.entries() * x;
    Eigen::VectorXd signs(ax.size());
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
      signs[i] = ax[i] > 0.0 ? 1.0 : (ax[i] < 0.0 ? -1.0 : 0.0);
    }
    const Eigen::VectorXd residual = ax.cwiseAbs() - y;
    const Eigen::VectorXd v =
        A.entries().transpose() * signs.cwiseProduct(residual).eval();
    x -= cfg.alpha * v;
    if (!x.allFinite()) {
      throw std::runtime_error(
          "solve produced a non-finite iterate at iteration " +
          std::to_string(t));
    }
    const double f = objective(A, y, x);
    trace.iterations = t;
    trace.objective_history.push_back(f);
    if (x_star) trace.dist_history.push_back(dist(x, *x_star));
    if (keep > 0 && t % keep == 0) {
      trace.iterates.push_back(x);
      last_stored = t;
    }
    if (std::abs(f - f_prev) <= cfg.tol * std::max(f_prev, 1e-300)) {
      trace.termination = Termination::Converged;
      break;
    }
    f_prev = f;
  }
  if (keep > 0 && last_stored != trace.iterations) {
    trace.iterates.push_back(x);  // the final iterate is always kept
  }
  return trace;
}

RegularityReport regularity_check(const MeasurementEnsemble& A,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& x_star,
                                  double eta_norm) {
  RegularityReport report;
  const Eigen::VectorXd v = subgradient(A, y, x);
  const Eigen::VectorXd d = signed_target(x, x_star);
  report.lhs = (v - d).norm();
  report.rhs = 0.5 * d.norm() + 2.0 * eta_norm;
  report.holds = report.lhs <= report.rhs;
  report.rc_inner_product_form =
      v.dot(d) >= 0.375 * d.squaredNorm() + 0.5 * v.squaredNorm();
  report.in_intended_regime =
      dist(x, x_star) <= 0.001 * x_star.norm() * (1.0 + 1e-12);
  return report;
}

std::string trace_csv(const SolverTrace& trace) {
  std::ostringstream out;
  out << "iter,dist,objective\n";
  for (std::size_t t = 0; t < trace.objective_history.size(); ++t) {
    out << t << ',';
    if (t < trace.dist_history.size()) out << format_double(trace.dist_history[t]);
    out << ',' << format_double(trace.objective_history[t]) << '\n';
  }
  return out.str();
}

void save_trace_csv(const SolverTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open trace file for writing: " + path);
  }
  out << trace_csv(trace);
  if (!out) {
    throw std::runtime_error("failed writing trace file: " + path);
  }
}

std::string trace_summary_json(const SolverTrace& trace) {
  std::ostringstream out;
  out << "{\"final_dist\":";
  if (trace.dist_history.empty()) {
    out << "null";
  } else {
    out << format_double(trace.dist_history.back());
  }
  out << ",\"iters\":" << trace.iterations << ",\"termination\":\""
      << (trace.termination == Termination::Converged ? "Converged"
                                                      : "MaxIters")
      << "\"}";
  return out.str();
}

}  // namespace ampflow
