#pragma once

#include <Eigen/Core>

#include "ampflow/measurement.hpp"

namespace oracles {

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
/// Independent of the library's power iteration so the two can cross-check
/// each other.
Eigen::VectorXd jacobi_eigenvalues(Eigen::MatrixXd S);

/// max |eigenvalue| of a symmetric matrix.
double jacobi_sym_norm(const Eigen::MatrixXd& S);

double jacobi_min_eig(const Eigen::MatrixXd& S);
double jacobi_max_eig(const Eigen::MatrixXd& S);

/// Spectral norm of a general rectangular matrix via Jacobi on M^T M.
double jacobi_spectral_norm(const Eigen::MatrixXd& M);

/// Symmetric matrix with a prescribed spectrum: Q diag(lambda) Q^T with Q a
/// seeded random orthogonal matrix (Gram-Schmidt of a Gaussian matrix).
Eigen::MatrixXd matrix_with_spectrum(const Eigen::VectorXd& lambda,
                                     std::uint64_t seed);

/// diag(sgn(Ax)) A as a dense matrix, sgn(0) = 0.
Eigen::MatrixXd dense_signed(const ampflow::MeasurementEnsemble& A,
                             const Eigen::VectorXd& x);

/// diag(Ax > 0) A or diag(Ax < 0) A as a dense matrix.
Eigen::MatrixXd dense_split(const ampflow::MeasurementEnsemble& A,
                            const Eigen::VectorXd& x, ampflow::SplitSide side);

/// Central finite differences of the amplitude objective at x.
Eigen::VectorXd fd_gradient(const ampflow::MeasurementEnsemble& A,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                            double h);

/// Wraps an explicit matrix as an ensemble fixture.
ampflow::MeasurementEnsemble make_ensemble(
    const Eigen::MatrixXd& entries,
    ampflow::VarianceConvention convention =
        ampflow::VarianceConvention::OneOverM,
    std::uint64_t seed = 0);

}  // namespace oracles
