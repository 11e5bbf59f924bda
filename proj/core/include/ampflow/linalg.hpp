#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ampflow {

/// Matrix-free linear map with explicit dimensions and adjoint.
struct LinearOperator {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply_adjoint;

  static LinearOperator from_matrix(Eigen::MatrixXd M);
  static LinearOperator symmetric(
      Eigen::Index dim,
      std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply);
};

/// Power iteration gave up before the Rayleigh quotient settled; carries the
/// last two Rayleigh quotients for diagnosis.
class PowerIterationError : public std::runtime_error {
 public:
  PowerIterationError(const std::string& what, double rq_previous,
                      double rq_last)
      : std::runtime_error(what),
        rq_previous_(rq_previous),
        rq_last_(rq_last) {}

  double rq_previous() const { return rq_previous_; }
  double rq_last() const { return rq_last_; }

 private:
  double rq_previous_;
  double rq_last_;
};

inline constexpr std::uint64_t kPowerIterationSeed = 0x9A7F3C21D4E5B601ULL;

struct EigenPairEstimate {
  double value = 0.0;
  Eigen::VectorXd vector;
  int iterations = 0;
};

/// Power iteration on a symmetric operator from a seeded Gaussian start.
/// Stops when the Rayleigh quotient's relative change drops below tol;
/// throws PowerIterationError after max_iters without settling.  For PSD
/// operators the Rayleigh quotient is non-decreasing along the iteration,
/// so the estimate approaches the top eigenvalue from below.
EigenPairEstimate power_eigenpair(const LinearOperator& op, double tol,
                                  int max_iters,
                                  std::uint64_t seed = kPowerIterationSeed);

/// sqrt of the top eigenvalue of op^T op (power iteration on z -> op^T(op z)).
double spectral_norm(const LinearOperator& op, double tol, int max_iters,
                     std::uint64_t seed = kPowerIterationSeed);

/// lambda_min(S) = s - lambda_max(s I - S) with shift s = spectral_norm(S).
/// Both stages under-estimate their target's magnitude slightly, so the
/// result never under-reports lambda_min.
double min_eigenvalue(const LinearOperator& symmetric_op, double tol,
                      int max_iters,
                      std::uint64_t seed = kPowerIterationSeed);

}  // namespace ampflow
