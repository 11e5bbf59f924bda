#include "ampflow/linalg.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <utility>

#include "ampflow/rng.hpp"

namespace ampflow {

LinearOperator LinearOperator::from_matrix(Eigen::MatrixXd M) {
  auto shared = std::make_shared<Eigen::MatrixXd>(std::move(M));
  LinearOperator op;
  op.rows = shared->rows();
  op.cols = shared->cols();
  // Explicit return types force materialization inside the lambda; a deduced
  // Eigen expression type would dangle once std::function converts it.
  op.apply = [shared](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return *shared * z;
  };
  op.apply_adjoint = [shared](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return shared->transpose() * z;
  };
  return op;
}

LinearOperator LinearOperator::symmetric(
    Eigen::Index dim,
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply) {
  LinearOperator op;
  op.rows = dim;
  op.cols = dim;
  op.apply = std::move(apply);
  op.apply_adjoint = op.apply;
  return op;
}

EigenPairEstimate power_eigenpair(const LinearOperator& op, double tol,
                                  int max_iters, std::uint64_t seed) {
  if (tol <= 0.0) {
    throw std::invalid_argument("power_eigenpair requires tol > 0");
  }
  if (op.rows != op.cols) {
    throw std::invalid_argument("power_eigenpair requires a square operator");
  }
  Rng rng(seed);
  Eigen::VectorXd z = unit_sphere_vector(rng, op.cols);
  double rq_prev = std::numeric_limits<double>::quiet_NaN();
  EigenPairEstimate est;
  for (int iter = 1; iter <= max_iters; ++iter) {
    Eigen::VectorXd w = op.apply(z);
    const double rq = z.dot(w);
    const double wn = w.norm();
    est.iterations = iter;
    if (wn == 0.0) {
      // The iterate was annihilated; the Rayleigh estimate on this Krylov
      // subspace is 0 (exact for the zero operator).
      est.value = 0.0;
      est.vector = std::move(z);
      return est;
    }
    z = w / wn;
    if (iter > 1 &&
        std::abs(rq - rq_prev) <= tol * std::max(std::abs(rq), 1e-300)) {
      est.value = rq;
      est.vector = std::move(z);
      return est;
    }
    rq_prev = rq;
  }
  Eigen::VectorXd w = op.apply(z);
  const double rq_last = z.dot(w);
  std::ostringstream msg;
  msg << "power iteration did not settle after " << max_iters
      << " iterations (Rayleigh quotients " << rq_prev << " -> " << rq_last
      << ")";
  throw PowerIterationError(msg.str(), rq_prev, rq_last);
}

double spectral_norm(const LinearOperator& op, double tol, int max_iters,
                     std::uint64_t seed) {
  LinearOperator normal;
  normal.rows = op.cols;
  normal.cols = op.cols;
  normal.apply = [&op](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return op.apply_adjoint(op.apply(z));
  };
  normal.apply_adjoint = normal.apply;
  const EigenPairEstimate est = power_eigenpair(normal, tol, max_iters, seed);
  return std::sqrt(std::max(est.value, 0.0));
}

double min_eigenvalue(const LinearOperator& symmetric_op, double tol,
                      int max_iters, std::uint64_t seed) {
  const double s = spectral_norm(symmetric_op, tol, max_iters, seed);
  LinearOperator shifted;
  shifted.rows = symmetric_op.rows;
  shifted.cols = symmetric_op.cols;
  shifted.apply = [&symmetric_op, s](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return s * z - symmetric_op.apply(z);
  };
  shifted.apply_adjoint = shifted.apply;
  // s >= (lambda_max + lambda_min)/2, so the top eigenvalue of sI - S is
  // s - lambda_min and the spectral norm recovers it.
  const double t = spectral_norm(shifted, tol, max_iters, seed);
  return s - t;
}

}  // namespace ampflow
