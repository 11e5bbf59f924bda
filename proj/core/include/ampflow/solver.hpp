#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ampflow/measurement.hpp"

namespace ampflow {

struct SolverConfig {
  double alpha = 1.0;    // step size, required in (0, 1]
  int max_iters = 500;
  double tol = 1e-14;    // relative objective-change stopping threshold
  std::uint64_t seed = 0;  // reserved for randomized-init variants
  int store_every = 1;   // keep every k-th iterate (x0 and final always kept)
};

enum class Termination { Converged, MaxIters };

struct SolverTrace {
  std::vector<Eigen::VectorXd> iterates;
  std::vector<double> dist_history;       // filled when x_star is supplied
  std::vector<double> objective_history;  // f(x_0) .. f(x_T)
  Termination termination = Termination::MaxIters;
  int iterations = 0;
};

/// f(x) = 1/2 || |Ax| - y ||^2.
double objective(const MeasurementEnsemble& A, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& x);

/// A_x^T (|Ax| - y): the canonical Clarke-subgradient selection with
/// sgn(0) = 0.
Eigen::VectorXd subgradient(const MeasurementEnsemble& A,
                            const Eigen::VectorXd& y,
                            const Eigen::VectorXd& x);

/// Branch of the sign ambiguity minimizing the error: Minus means the
/// target is x - x_star.  Ties resolve to Minus.
enum class SignBranch { Minus, Plus };

struct DistResult {
  double value;
  SignBranch branch;
};

/// min(||x - x_star||, ||x + x_star||) plus the achieving branch.
DistResult dist_signed(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& x_star);
double dist(const Eigen::VectorXd& x, const Eigen::VectorXd& x_star);

/// x - x_star or x + x_star according to dist_signed's branch.
Eigen::VectorXd signed_target(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& x_star);

/// x0 = ||y|| * v with v the top unit eigenvector of D = sum_i y_i^2 a_i a_i^T,
/// computed matrix-free by power iteration (at most 200 iterations, tol 1e-10
/// on Rayleigh-quotient change).  Requires the OneOverM convention and m >= n.
Eigen::VectorXd spectral_init(const MeasurementEnsemble& A,
                              const Eigen::VectorXd& y);

/// Subgradient descent x_{t+1} = x_t - alpha * subgradient(A, y, x_t).
/// Stops on relative objective change < cfg.tol or after cfg.max_iters.
/// Throws on a non-finite iterate, naming the iteration index.
SolverTrace solve(const MeasurementEnsemble& A, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& x0, const SolverConfig& cfg,
                  const Eigen::VectorXd* x_star = nullptr);

struct RegularityReport {
  double lhs = 0.0;  // ||v - (x +/- x_star)||
  double rhs = 0.0;  // 1/2 ||x +/- x_star|| + 2 ||eta||
  bool holds = false;
  bool rc_inner_product_form = false;  // <v,d> >= 3/8 ||d||^2 + 1/2 ||v||^2
  bool in_intended_regime = false;     // dist <= 0.001 ||x_star||
};

/// Local regularity diagnostic: how far the subgradient is from pointing at
/// the sign-resolved solution.  The inner-product form is the noiseless
/// equivalent restatement and is evaluated unconditionally.
RegularityReport regularity_check(const MeasurementEnsemble& A,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& x_star,
                                  double eta_norm);

/// CSV columns: iter, dist, objective (dist empty when not tracked).
void save_trace_csv(const SolverTrace& trace, const std::string& path);
std::string trace_csv(const SolverTrace& trace);

/// JSON object with final_dist, iters, termination.
std::string trace_summary_json(const SolverTrace& trace);

}  // namespace ampflow
