#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

namespace ampflow {

/// Entry variance of a Gaussian ensemble: N(0, 1/m) or N(0, 1).
/// The conversion factor between the two is exactly sqrt(m).
enum class VarianceConvention { OneOverM, Unit };

std::string to_string(VarianceConvention convention);
VarianceConvention variance_convention_from_string(const std::string& name);

using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Immutable m x n measurement matrix with its declared variance convention
/// and the seed that produced it.  Rows are the measurement vectors a_i.
class MeasurementEnsemble {
 public:
  MeasurementEnsemble(RowMatrixXd entries, VarianceConvention convention,
                      std::uint64_t seed);

  Eigen::Index m() const { return entries_.rows(); }
  Eigen::Index n() const { return entries_.cols(); }
  const RowMatrixXd& entries() const { return entries_; }
  VarianceConvention convention() const { return convention_; }
  std::uint64_t seed() const { return seed_; }

 private:
  RowMatrixXd entries_;
  VarianceConvention convention_;
  std::uint64_t seed_;
};

/// Ground truth, noise, and the observed amplitudes y = |A x_star| + eta.
struct PhaseRetrievalInstance {
  Eigen::VectorXd x_star;
  Eigen::VectorXd eta;
  Eigen::VectorXd y;
};

/// Entrywise sgn(Ax) with sgn(0) = 0; entries are in {-1, 0, +1}.
struct SignSelector {
  Eigen::VectorXd signs;
};

enum class SplitSide { Plus, Minus };

/// i.i.d. Gaussian ensemble, deterministic in (m, n, convention, seed).
/// Unit entries equal sqrt(m) times the OneOverM entries for the same seed.
MeasurementEnsemble sample_ensemble(Eigen::Index m, Eigen::Index n,
                                    VarianceConvention convention,
                                    std::uint64_t seed);

PhaseRetrievalInstance forward_model(const MeasurementEnsemble& A,
                                     const Eigen::VectorXd& x_star,
                                     const Eigen::VectorXd& eta);

/// Gaussian-direction noise rescaled so that ||eta|| = rho * x_star_norm
/// exactly; the zero vector when rho = 0.
Eigen::VectorXd bounded_noise(Eigen::Index m, double rho, double x_star_norm,
                              std::uint64_t seed);

SignSelector sign_pattern(const MeasurementEnsemble& A,
                          const Eigen::VectorXd& x);

/// diag(sgn(Ax)) A z.
Eigen::VectorXd apply_signed(const MeasurementEnsemble& A,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& z);
Eigen::VectorXd apply_signed(const MeasurementEnsemble& A,
                             const SignSelector& signs,
                             const Eigen::VectorXd& z);

/// A^T diag(sgn(Ax)) w.
Eigen::VectorXd apply_signed_adjoint(const MeasurementEnsemble& A,
                                     const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& w);
Eigen::VectorXd apply_signed_adjoint(const MeasurementEnsemble& A,
                                     const SignSelector& signs,
                                     const Eigen::VectorXd& w);

/// Plus: diag(Ax > 0) A z.  Minus: diag(Ax < 0) A z.
/// Rows with <a_i, x> = 0 are zeroed on both sides.
Eigen::VectorXd apply_split(const MeasurementEnsemble& A,
                            const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                            SplitSide side);

/// CSV fixture format (see README): a version line, four header key/value
/// lines (m, n, convention, seed), then m comma-separated entry rows printed
/// with enough digits to round-trip doubles exactly.
void save_ensemble_csv(const MeasurementEnsemble& A, const std::string& path);
MeasurementEnsemble load_ensemble_csv(const std::string& path);

}  // namespace ampflow
