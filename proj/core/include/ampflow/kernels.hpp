#pragma once

#include <optional>

#include <Eigen/Core>

namespace ampflow {

/// Principal angle between two nonzero vectors together with their unit
/// directions.  theta lies in [0, pi] and cos(theta) = <x_hat, y_hat>.
struct AnglePair {
  double theta;
  Eigen::VectorXd x_hat;
  Eigen::VectorXd y_hat;
};

/// theta = arccos(clamp(<x_hat, y_hat>, -1, 1)).  Inner products within
/// 1e-14 of +/-1 snap to exactly 0 or pi so that collinear inputs produce
/// exact degenerate kernels; |dot| exceeding 1 by more than 1e-9 signals a
/// non-normalized-input bug and raises.
AnglePair angle_between(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Orthonormal working basis for the swap matrix: u1 = x_hat, u2 = the
/// Gram-Schmidt remainder of y_hat against x_hat.  When sin(theta) < 1e-8
/// the pair is treated as collinear: u2 = 0, s = 0, c = +/-1.
struct SwapBasis {
  Eigen::VectorXd u1;
  Eigen::VectorXd u2;
  double c = 1.0;  // cos(theta)
  double s = 0.0;  // sin(theta), 0 in the degenerate branch
  bool degenerate = false;
};

SwapBasis swap_basis(const AnglePair& pair);

/// M x_hat = y_hat, M y_hat = x_hat, M z = 0 on the orthogonal complement;
/// for theta in {0, pi} this degenerates to +/- x_hat x_hat^T.  Assembled as
/// c*u1*u1^T + s*(u1*u2^T + u2*u1^T) - c*u2*u2^T.
Eigen::MatrixXd swap_matrix(const AnglePair& pair);

enum class KernelKind { Phi, Q, H };

/// Closed-form expectation kernel c_I * I + c_M * M_{x_hat<->y_hat}.
///
///   Phi = (pi - 2 theta)/pi I + (2 sin theta)/pi M
///   Q   = (pi - theta)/(2 pi) I + sin(theta)/(2 pi) M
///   H   = theta/(2 pi) I - sin(theta)/(2 pi) M
///
/// and the zero matrix when x or y is zero.  Kernels are materialized
/// densely and also applicable matrix-free in O(n).
class ExpectationKernel {
 public:
  ExpectationKernel(KernelKind kind, Eigen::Index n);  // zero kernel
  ExpectationKernel(KernelKind kind, double identity_coeff, double swap_coeff,
                    AnglePair source);

  KernelKind kind() const { return kind_; }
  bool is_zero() const { return zero_; }
  Eigen::Index dim() const { return n_; }
  double identity_coeff() const { return identity_coeff_; }
  double swap_coeff() const { return swap_coeff_; }
  const std::optional<AnglePair>& source() const { return source_; }
  const SwapBasis& basis() const { return basis_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  /// c_I * z + c_M * M z without touching the dense matrix.
  Eigen::VectorXd apply(const Eigen::VectorXd& z) const;

 private:
  KernelKind kind_;
  Eigen::Index n_;
  bool zero_;
  double identity_coeff_ = 0.0;
  double swap_coeff_ = 0.0;
  std::optional<AnglePair> source_;
  SwapBasis basis_;
  Eigen::MatrixXd matrix_;
};

ExpectationKernel phi(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
ExpectationKernel q_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
ExpectationKernel h_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace ampflow
