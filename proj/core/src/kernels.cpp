#include "ampflow/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ampflow {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCollinearSnap = 1e-14;  // snap window on the inner product
constexpr double kDegenerateSin = 1e-8;

}  // namespace

AnglePair angle_between(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) {
    throw std::invalid_argument("angle_between requires nonzero vectors");
  }
  AnglePair pair;
  pair.x_hat = x / nx;
  pair.y_hat = y / ny;
  double dot = pair.x_hat.dot(pair.y_hat);
  if (std::abs(dot) - 1.0 > 1e-9) {
    throw std::invalid_argument(
        "angle_between: |<x_hat, y_hat>| exceeds 1 beyond rounding");
  }
  if (dot > 1.0) dot = 1.0;
  if (dot < -1.0) dot = -1.0;
  if (dot >= 1.0 - kCollinearSnap) {
    pair.theta = 0.0;
  } else if (dot <= -1.0 + kCollinearSnap) {
    pair.theta = kPi;
  } else {
    pair.theta = std::acos(dot);
  }
  return pair;
}

SwapBasis swap_basis(const AnglePair& pair) {
  SwapBasis basis;
  basis.u1 = pair.x_hat;
  basis.c = std::cos(pair.theta);
  basis.s = std::sin(pair.theta);
  if (basis.s < kDegenerateSin) {
    basis.degenerate = true;
    basis.c = pair.theta < kPi / 2 ? 1.0 : -1.0;
    basis.s = 0.0;
    basis.u2 = Eigen::VectorXd::Zero(pair.x_hat.size());
    return basis;
  }
  Eigen::VectorXd w = pair.y_hat - pair.y_hat.dot(basis.u1) * basis.u1;
  const double wn = w.norm();
  if (wn < kDegenerateSin) {
    // Numerically collinear despite sin(theta) >= threshold; fall back.
    basis.degenerate = true;
    basis.c = basis.c >= 0.0 ? 1.0 : -1.0;
    basis.s = 0.0;
    basis.u2 = Eigen::VectorXd::Zero(pair.x_hat.size());
    return basis;
  }
  basis.u2 = w / wn;
  return basis;
}

Eigen::MatrixXd swap_matrix(const AnglePair& pair) {
  const SwapBasis b = swap_basis(pair);
  Eigen::MatrixXd M = b.c * (b.u1 * b.u1.transpose());
  if (!b.degenerate) {
    M += b.s * (b.u1 * b.u2.transpose() + b.u2 * b.u1.transpose());
    M -= b.c * (b.u2 * b.u2.transpose());
  }
  return M;
}

ExpectationKernel::ExpectationKernel(KernelKind kind, Eigen::Index n)
    : kind_(kind), n_(n), zero_(true), matrix_(Eigen::MatrixXd::Zero(n, n)) {}

ExpectationKernel::ExpectationKernel(KernelKind kind, double identity_coeff,
                                     double swap_coeff, AnglePair source)
    : kind_(kind),
      n_(source.x_hat.size()),
      zero_(false),
      identity_coeff_(identity_coeff),
      swap_coeff_(swap_coeff),
      source_(std::move(source)),
      basis_(swap_basis(*source_)) {
  matrix_ = swap_coeff_ * swap_matrix(*source_);
  matrix_.diagonal().array() += identity_coeff_;
}

Eigen::VectorXd ExpectationKernel::apply(const Eigen::VectorXd& z) const {
  if (z.size() != n_) {
    throw std::invalid_argument("ExpectationKernel::apply dimension mismatch");
  }
  if (zero_) return Eigen::VectorXd::Zero(n_);
  const double p1 = basis_.u1.dot(z);
  Eigen::VectorXd out = identity_coeff_ * z;
  if (basis_.degenerate) {
    out += (swap_coeff_ * basis_.c * p1) * basis_.u1;
    return out;
  }
  const double p2 = basis_.u2.dot(z);
  out += swap_coeff_ * ((basis_.c * p1 + basis_.s * p2) * basis_.u1 +
                        (basis_.s * p1 - basis_.c * p2) * basis_.u2);
  return out;
}

namespace {

ExpectationKernel make_kernel(KernelKind kind, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y) {
  const Eigen::Index n = x.size();
  if (y.size() != n) {
    throw std::invalid_argument("kernel arguments must share a dimension");
  }
  if (x.norm() == 0.0 || y.norm() == 0.0) {
    return ExpectationKernel(kind, n);
  }
  AnglePair pair = angle_between(x, y);
  const double theta = pair.theta;
  const double sin_theta = std::sin(theta);
  double ci = 0.0;
  double cm = 0.0;
  switch (kind) {
    case KernelKind::Phi:
      ci = (kPi - 2.0 * theta) / kPi;
      cm = 2.0 * sin_theta / kPi;
      break;
    case KernelKind::Q:
      ci = (kPi - theta) / (2.0 * kPi);
      cm = sin_theta / (2.0 * kPi);
      break;
    case KernelKind::H:
      ci = theta / (2.0 * kPi);
      cm = -sin_theta / (2.0 * kPi);
      break;
  }
  return ExpectationKernel(kind, ci, cm, std::move(pair));
}

}  // namespace

ExpectationKernel phi(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return make_kernel(KernelKind::Phi, x, y);
}

ExpectationKernel q_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return make_kernel(KernelKind::Q, x, y);
}

ExpectationKernel h_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return make_kernel(KernelKind::H, x, y);
}

}  // namespace ampflow
