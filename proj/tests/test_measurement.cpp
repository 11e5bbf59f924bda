#include "ampflow/measurement.hpp"

#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include <gtest/gtest.h>

#include "ampflow/linalg.hpp"
#include "ampflow/rng.hpp"
#include "support/oracles.hpp"

namespace {

using ampflow::MeasurementEnsemble;
using ampflow::Rng;
using ampflow::SplitSide;
using ampflow::VarianceConvention;

TEST(SampleEnsemble, DeterministicBitForBit) {
  const auto a = ampflow::sample_ensemble(4, 3, VarianceConvention::OneOverM, 7);
  const auto b = ampflow::sample_ensemble(4, 3, VarianceConvention::OneOverM, 7);
  ASSERT_EQ(a.m(), 4);
  ASSERT_EQ(a.n(), 3);
  EXPECT_TRUE(a.entries() == b.entries());
  EXPECT_EQ(a.seed(), 7u);
}

TEST(SampleEnsemble, ZeroDimensionsRejected) {
  EXPECT_THROW(ampflow::sample_ensemble(0, 3, VarianceConvention::Unit, 1),
               std::invalid_argument);
  EXPECT_THROW(ampflow::sample_ensemble(3, 0, VarianceConvention::Unit, 1),
               std::invalid_argument);
}

TEST(SampleEnsemble, ColumnSampleVarianceMatchesConvention) {
  const Eigen::Index m = 2000, n = 10;
  const auto A = ampflow::sample_ensemble(m, n, VarianceConvention::OneOverM, 3);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double mean = A.entries().col(j).mean();
    const double var =
        (A.entries().col(j).array() - mean).square().sum() / (m - 1);
    EXPECT_GE(var, 0.8 / m) << "column " << j;
    EXPECT_LE(var, 1.2 / m) << "column " << j;
  }
}

TEST(SampleEnsemble, UnitEqualsSqrtMTimesOneOverM) {
  const Eigen::Index m = 2000, n = 10;
  const auto u = ampflow::sample_ensemble(m, n, VarianceConvention::Unit, 99);
  const auto o = ampflow::sample_ensemble(m, n, VarianceConvention::OneOverM, 99);
  const double scale = std::sqrt(static_cast<double>(m));
  const double err = (u.entries() - scale * o.entries()).cwiseAbs().maxCoeff();
  EXPECT_LE(err, 1e-15 * u.entries().cwiseAbs().maxCoeff());
}

TEST(ForwardModel, IdentityRowsFixture) {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  const auto A = oracles::make_ensemble(id);
  Eigen::VectorXd x(2);
  x << -2.0, 3.0;
  const auto inst = ampflow::forward_model(A, x, Eigen::VectorXd::Zero(2));
  EXPECT_EQ(inst.y[0], 2.0);
  EXPECT_EQ(inst.y[1], 3.0);
  EXPECT_TRUE(inst.x_star == x);
}

TEST(ForwardModel, NoiselessAmplitudesAreNonnegative) {
  const auto A = ampflow::sample_ensemble(60, 7, VarianceConvention::OneOverM, 21);
  Rng rng(5);
  const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 7);
  const auto inst = ampflow::forward_model(A, x, Eigen::VectorXd::Zero(60));
  EXPECT_GE(inst.y.minCoeff(), 0.0);
  // y is recomputable from the stored fields.
  const Eigen::VectorXd recomputed =
      (A.entries() * inst.x_star).cwiseAbs() + inst.eta;
  EXPECT_TRUE(inst.y == recomputed);
}

TEST(ForwardModel, AmplitudeEnergyConcentrates) {
  const Eigen::Index m = 5000, n = 12;
  const auto A = ampflow::sample_ensemble(m, n, VarianceConvention::OneOverM, 8);
  Rng rng(9);
  const Eigen::VectorXd x = ampflow::unit_sphere_vector(rng, n);
  const auto inst = ampflow::forward_model(A, x, Eigen::VectorXd::Zero(m));
  const double energy = inst.y.squaredNorm();
  EXPECT_GE(energy, 0.9);
  EXPECT_LE(energy, 1.1);
}

TEST(ForwardModel, RejectsBadInputs) {
  const auto A = ampflow::sample_ensemble(5, 3, VarianceConvention::OneOverM, 1);
  EXPECT_THROW(
      ampflow::forward_model(A, Eigen::VectorXd::Ones(4), Eigen::VectorXd::Zero(5)),
      std::invalid_argument);
  EXPECT_THROW(
      ampflow::forward_model(A, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(4)),
      std::invalid_argument);
  EXPECT_THROW(
      ampflow::forward_model(A, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(5)),
      std::invalid_argument);
}

TEST(BoundedNoise, ZeroRhoGivesZeroVector) {
  const Eigen::VectorXd eta = ampflow::bounded_noise(10, 0.0, 3.0, 4);
  EXPECT_EQ(eta.norm(), 0.0);
}

TEST(BoundedNoise, NormIsExactlyRescaled) {
  const Eigen::VectorXd eta = ampflow::bounded_noise(50, 0.01, 1.0, 4);
  EXPECT_NEAR(eta.norm(), 0.01, 1e-17);
  const Eigen::VectorXd eta2 = ampflow::bounded_noise(50, 0.25, 2.0, 4);
  EXPECT_NEAR(eta2.norm(), 0.5, 1e-15);
}

TEST(BoundedNoise, SeedsChangeDirectionNotNorm) {
  const Eigen::VectorXd a = ampflow::bounded_noise(20, 0.1, 1.0, 1);
  const Eigen::VectorXd b = ampflow::bounded_noise(20, 0.1, 1.0, 2);
  EXPECT_NEAR(a.norm(), b.norm(), 1e-16);
  EXPECT_GT((a - b).norm(), 1e-3);
}

TEST(BoundedNoise, NegativeRhoRejected) {
  EXPECT_THROW(ampflow::bounded_noise(10, -0.1, 1.0, 0), std::invalid_argument);
}

TEST(SignPattern, DefinitionIncludingExactZero) {
  Eigen::MatrixXd rows(3, 1);
  rows << 1.5, -0.2, 0.0;
  const auto A = oracles::make_ensemble(rows);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  const auto s = ampflow::sign_pattern(A, x);
  EXPECT_EQ(s.signs[0], 1.0);
  EXPECT_EQ(s.signs[1], -1.0);
  EXPECT_EQ(s.signs[2], 0.0);
}

TEST(SignPattern, PositiveScaleInvarianceAndOddSymmetry) {
  const auto A = ampflow::sample_ensemble(40, 6, VarianceConvention::OneOverM, 2);
  Rng rng(3);
  const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 6);
  const auto s1 = ampflow::sign_pattern(A, x);
  const auto s2 = ampflow::sign_pattern(A, 2.0 * x);
  const auto s3 = ampflow::sign_pattern(A, -x);
  EXPECT_TRUE(s1.signs == s2.signs);
  EXPECT_TRUE(s1.signs == -s3.signs);
}

TEST(ApplySigned, RecoverAbsoluteValuesAtGenerator) {
  const auto A = ampflow::sample_ensemble(30, 5, VarianceConvention::OneOverM, 6);
  Rng rng(7);
  const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 5);
  const Eigen::VectorXd lhs = ampflow::apply_signed(A, x, x);
  const Eigen::VectorXd rhs = (A.entries() * x).cwiseAbs();
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ApplySigned, OddInSignArgument) {
  const auto A = ampflow::sample_ensemble(30, 5, VarianceConvention::OneOverM, 6);
  Rng rng(8);
  const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 5);
  const Eigen::VectorXd z = ampflow::gaussian_vector(rng, 5);
  const Eigen::VectorXd a = ampflow::apply_signed(A, x, z);
  const Eigen::VectorXd b = ampflow::apply_signed(A, -x, z);
  EXPECT_TRUE(a == -b);
}

TEST(ApplySigned, MatchesDenseOracle) {
  const auto A = ampflow::sample_ensemble(5, 3, VarianceConvention::OneOverM, 10);
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 3);
    const Eigen::VectorXd z = ampflow::gaussian_vector(rng, 3);
    const Eigen::VectorXd got = ampflow::apply_signed(A, x, z);
    const Eigen::VectorXd want = oracles::dense_signed(A, x) * z;
    ASSERT_LE((got - want).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ApplySignedAdjoint, AdjointIdentity) {
  const auto A = ampflow::sample_ensemble(25, 7, VarianceConvention::OneOverM, 12);
  Rng rng(13);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 7);
    const Eigen::VectorXd z = ampflow::gaussian_vector(rng, 7);
    const Eigen::VectorXd w = ampflow::gaussian_vector(rng, 25);
    const double lhs = ampflow::apply_signed(A, x, z).dot(w);
    const double rhs = z.dot(ampflow::apply_signed_adjoint(A, x, w));
    ASSERT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(ApplySignedAdjoint, ZeroInputGivesZero) {
  const auto A = ampflow::sample_ensemble(25, 7, VarianceConvention::OneOverM, 12);
  Rng rng(14);
  const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 7);
  const Eigen::VectorXd out =
      ampflow::apply_signed_adjoint(A, x, Eigen::VectorXd::Zero(25));
  EXPECT_EQ(out.norm(), 0.0);
}

TEST(ApplySignedAdjoint, MatchesDenseOracle) {
  const auto A = ampflow::sample_ensemble(6, 4, VarianceConvention::OneOverM, 15);
  Rng rng(16);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 4);
    const Eigen::VectorXd w = ampflow::gaussian_vector(rng, 6);
    const Eigen::VectorXd got = ampflow::apply_signed_adjoint(A, x, w);
    const Eigen::VectorXd want = oracles::dense_signed(A, x).transpose() * w;
    ASSERT_LE((got - want).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ApplySplit, SignedIsPlusMinusMinus) {
  const auto A = ampflow::sample_ensemble(40, 6, VarianceConvention::OneOverM, 17);
  Rng rng(18);
  const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 6);
  const Eigen::VectorXd z = ampflow::gaussian_vector(rng, 6);
  const Eigen::VectorXd lhs = ampflow::apply_signed(A, x, z);
  const Eigen::VectorXd rhs = ampflow::apply_split(A, x, z, SplitSide::Plus) -
                              ampflow::apply_split(A, x, z, SplitSide::Minus);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ApplySplit, AllPositiveInnerProducts) {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  const auto A = oracles::make_ensemble(id);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd z(3);
  z << 1.0, -2.0, 0.5;
  EXPECT_TRUE(ampflow::apply_split(A, x, z, SplitSide::Plus) == z);
  EXPECT_EQ(ampflow::apply_split(A, x, z, SplitSide::Minus).norm(), 0.0);
}

TEST(ApplySplit, MatchesDenseOracleAndZeroesTies) {
  Eigen::MatrixXd rows(4, 2);
  rows << 1.0, 0.0, -1.0, 0.5, 0.0, 0.0, 2.0, -1.0;
  const auto A = oracles::make_ensemble(rows);
  Eigen::VectorXd x(2);
  x << 0.0, 1.0;  // row dots: 0, 0.5, 0, -1  (two exact ties)
  Eigen::VectorXd z(2);
  z << 3.0, -1.0;
  for (SplitSide side : {SplitSide::Plus, SplitSide::Minus}) {
    const Eigen::VectorXd got = ampflow::apply_split(A, x, z, side);
    const Eigen::VectorXd want = oracles::dense_split(A, x, side) * z;
    EXPECT_TRUE(got == want);
  }
  EXPECT_EQ(ampflow::apply_split(A, x, z, SplitSide::Plus)[0], 0.0);
  EXPECT_EQ(ampflow::apply_split(A, x, z, SplitSide::Minus)[0], 0.0);
}

TEST(Decomposition, SignedGramSplitsIntoFourTerms) {
  const auto A = ampflow::sample_ensemble(50, 8, VarianceConvention::OneOverM, 19);
  Rng rng(20);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd x = ampflow::gaussian_vector(rng, 8);
    const Eigen::VectorXd y = ampflow::gaussian_vector(rng, 8);
    const Eigen::VectorXd z = ampflow::gaussian_vector(rng, 8);
    const Eigen::MatrixXd Sx = oracles::dense_signed(A, x);
    const Eigen::MatrixXd Sy = oracles::dense_signed(A, y);
    const Eigen::MatrixXd Px = oracles::dense_split(A, x, SplitSide::Plus);
    const Eigen::MatrixXd Mx = oracles::dense_split(A, x, SplitSide::Minus);
    const Eigen::MatrixXd Py = oracles::dense_split(A, y, SplitSide::Plus);
    const Eigen::MatrixXd My = oracles::dense_split(A, y, SplitSide::Minus);
    const Eigen::VectorXd lhs = Sx.transpose() * (Sy * z);
    const Eigen::VectorXd rhs =
        Px.transpose() * (Py * z) + Mx.transpose() * (My * z) -
        Px.transpose() * (My * z) - Mx.transpose() * (Py * z);
    const double scale = std::max(1.0, lhs.norm());
    ASSERT_LE((lhs - rhs).norm(), 1e-12 * scale);
  }
}

TEST(SignedOperator, NormBoundedByTwoInOverdeterminedRegime) {
  const Eigen::Index n = 30, m = 300;
  const auto A = ampflow::sample_ensemble(m, n, VarianceConvention::OneOverM, 23);
  Rng rng(24);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = ampflow::unit_sphere_vector(rng, n);
    ampflow::LinearOperator op;
    op.rows = m;
    op.cols = n;
    op.apply = [&A, x](const Eigen::VectorXd& z) -> Eigen::VectorXd {
      return ampflow::apply_signed(A, x, z);
    };
    op.apply_adjoint = [&A, x](const Eigen::VectorXd& w) -> Eigen::VectorXd {
      return ampflow::apply_signed_adjoint(A, x, w);
    };
    ASSERT_LE(ampflow::spectral_norm(op, 1e-6, 5000), 2.0);
  }
}

TEST(EnsembleCsv, RoundTripIsExact) {
  const auto A = ampflow::sample_ensemble(9, 4, VarianceConvention::Unit,
                                          0xDEADBEEFCAFEULL);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ampflow_rt.csv").string();
  ampflow::save_ensemble_csv(A, path);
  const auto B = ampflow::load_ensemble_csv(path);
  EXPECT_EQ(B.m(), A.m());
  EXPECT_EQ(B.n(), A.n());
  EXPECT_EQ(B.convention(), A.convention());
  EXPECT_EQ(B.seed(), A.seed());
  EXPECT_TRUE(B.entries() == A.entries());
  std::filesystem::remove(path);
}

TEST(EnsembleCsv, MissingFileRejected) {
  EXPECT_THROW(ampflow::load_ensemble_csv("/nonexistent/ampflow.csv"),
               std::runtime_error);
}

}  // namespace
