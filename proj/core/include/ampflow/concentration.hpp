#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ampflow/kernels.hpp"
#include "ampflow/linalg.hpp"
#include "ampflow/measurement.hpp"

namespace ampflow {

/// Pairing of one empirical operator with its expectation kernel:
///   FullMDC    A_x^T A_y        vs Phi
///   PlusPlus   A_+x^T A_+y      vs Q
///   MinusMinus A_-x^T A_-y      vs Q
///   PlusMinus  A_+x^T A_-y      vs H
///   MinusPlus  A_-x^T A_+y      vs H
enum class DeviationFamily { FullMDC, PlusPlus, MinusMinus, PlusMinus, MinusPlus };

std::string to_string(DeviationFamily kind);

/// Sampled + locally-refined deviation statistics for one (ensemble, family).
/// Every reported figure is a Rayleigh-quotient estimate from below, so the
/// statistics are an empirical lower bound on the true supremum.
struct ConcentrationReport {
  Eigen::Index m = 0;
  Eigen::Index n = 0;
  DeviationFamily kind = DeviationFamily::FullMDC;
  int num_pairs = 0;
  double max_dev = 0.0;
  double mean_dev = 0.0;
  std::vector<double> quantiles;  // p50, p90, p99 of the sampled deviations
  double refined_max_dev = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

struct RelaxationParams {
  double epsilon;  // required in (0, 1)
};

/// The expectation kernel paired with `kind`, evaluated at (x, y).
ExpectationKernel family_kernel(DeviationFamily kind, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y);

/// Row weights of the empirical operator A^T diag(w) A for `kind`:
/// sign products for FullMDC, indicator products for the split families.
Eigen::VectorXd family_weights(DeviationFamily kind, const Eigen::VectorXd& ax,
                               const Eigen::VectorXd& ay);

/// Symmetric operator z -> A^T (w .* (A z)) - K z, the deviation between the
/// weighted Gram operator and its kernel, never materialized.
LinearOperator deviation_operator(const MeasurementEnsemble& A,
                                  const Eigen::VectorXd& weights,
                                  const ExpectationKernel& kernel);

/// || empirical operator - kernel || via matrix-free power iteration.
/// Requires the OneOverM convention (the kernels are expectations under the
/// 1/m entry variance).
double mdc_deviation(const MeasurementEnsemble& A, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& y, DeviationFamily kind,
                     double tol = 1e-9, int max_iters = 5000);

/// Budget knobs for the sampled scan inside empirical_sup_deviation.  The
/// scan runs a fixed number of power steps per pair (batched across pairs);
/// refinement proposals get a larger fixed budget, and the final incumbent is
/// polished to polish_tol.  All three estimates share each pair's start
/// vector, so more steps can only increase the estimate and the report
/// invariant refined_max_dev >= max_dev holds by construction.
struct SupSearchBudget {
  int scan_steps = 12;
  int refine_steps_per_eval = 24;
  double polish_tol = 1e-7;
  int polish_max_iters = 2000;
  int batch_pairs = 128;
};

/// Per-pair record streamed to the optional callback, in pair-index order.
struct PairDeviation {
  int pair_index;
  double theta;
  double deviation;
};
using PairCallback = std::function<void(const PairDeviation&)>;

/// Samples num_pairs uniform sphere pairs, estimates each deviation, then
/// runs refine_steps of random local perturbation ascent from the worst pair
/// (start radius 0.3, radius decays by 0.9 after every 10 consecutive
/// non-improving proposals).  The result is an empirical LOWER bound on the
/// supremum over all pairs.
ConcentrationReport empirical_sup_deviation(
    const MeasurementEnsemble& A, DeviationFamily kind, int num_pairs,
    int refine_steps, std::uint64_t seed,
    const SupSearchBudget& budget = SupSearchBudget{},
    const PairCallback& on_pair = nullptr);

/// The four piecewise-linear indicator relaxations.  Outer/Inner name the
/// side of 0 that carries the ramp: Outer ramps on [-eps, 0], Inner on
/// [0, eps].  PlusOuter/MinusInner dominate their indicators; PlusInner/
/// MinusOuter are dominated by them.
enum class RelaxedIndicator { PlusOuter, PlusInner, MinusOuter, MinusInner };

double relaxed_indicator(double t, RelaxedIndicator which, double eps);

enum class EnvelopeSide { Up, Low };

/// phi-product row weights of G_{V,side}(x, y); entries in [0, 1].
Eigen::VectorXd g_weights(const MeasurementEnsemble& V,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          double eps, EnvelopeSide side);

/// G_{V,up} = sum_i phi+_{-eps}(<v_i,x>) phi-_{eps}(<v_i,y>) v_i v_i^T;
/// G_{V,low} uses the (phi+_{eps}, phi-_{-eps}) weights.
Eigen::MatrixXd g_matrix(const MeasurementEnsemble& V, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& y, double eps,
                         EnvelopeSide side);

/// Matrix-free z -> V^T (w .* (V z)) for a fixed weight vector.
LinearOperator weighted_gram_operator(const MeasurementEnsemble& V,
                                      Eigen::VectorXd weights);

/// (1/m) <u, G_{V,side}(x,y) u>, computed as a weighted sum of <v_i, u>^2
/// without materializing G.  Requires ||u|| = 1 to 1e-9.
double g_quadratic_form(const MeasurementEnsemble& V, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, const Eigen::VectorXd& u,
                        double eps, EnvelopeSide side);

/// <u, H_{x,y} u> for unit u.
double h_quadratic_form(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& u);

struct ThetaMembership {
  bool in_theta = false;
  double norm = 0.0;          // estimated ||V||
  double max_row_norm = 0.0;
};

/// Checks ||V|| <= 3 sqrt(m) and max_i ||v_i|| <= sqrt(2n).  Theta is stated
/// for N(0,1) entries, so any other convention raises.
ThetaMembership theta_membership(const MeasurementEnsemble& V);

struct BallCheck {
  bool member = false;
  double lhs = 0.0;        // sum_i |<v_i,z>| <v_i,u>^2
  double threshold = 0.0;  // eps^2 m
};

/// Membership of z in B_{V,eps^2,u} = { z : sum |<v_i,z>| <v_i,u>^2 <= eps^2 m }.
BallCheck pseudo_lipschitz_ball_check(const MeasurementEnsemble& V,
                                      const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& u, double eps);

struct PseudoLipschitzCheck {
  bool precondition_ok = false;  // both perturbations inside the ball
  bool satisfied = false;        // |delta_g| <= 2 eps (valid when precondition_ok)
  double delta_g = 0.0;
};

/// |g_V(x,y,u) - g_V(x~,y~,u)| <= 2 eps whenever x - x~ and y - y~ lie in
/// B_{V,eps^2,u}.  A violated precondition is reported distinctly from a
/// property failure.
PseudoLipschitzCheck pseudo_lipschitz_property_check(
    const MeasurementEnsemble& V, const Eigen::VectorXd& x,
    const Eigen::VectorXd& y, const Eigen::VectorXd& x_tilde,
    const Eigen::VectorXd& y_tilde, const Eigen::VectorXd& u, double eps);

struct StripExpectationCheck {
  double max_eig_estimate = 0.0;
  double bound = 0.0;       // eps / (2 ||x||)
  double std_error = 0.0;   // Monte Carlo standard-error scale for the estimate
  int num_samples = 0;
};

/// Monte Carlo check of E[1_{-eps <= <a,x> <= 0} a a^T] <= eps/(2||x||) I
/// over standard-Gaussian a.
StripExpectationCheck indicator_strip_expectation_check(
    const Eigen::VectorXd& x, double eps, int num_samples, std::uint64_t seed);

struct GBoundReport {
  int num_pairs = 0;
  double slack = 1.5;
  double eps = 0.0;
  // Margins normalized by m*eps: <= slack means within the bound.
  double worst_upper_margin = 0.0;  // max over pairs of lambda_max(G_up - mH)/(m eps)
  double worst_lower_margin = 0.0;  // max over pairs of -lambda_min(G_low - mH)/(m eps)
  bool all_within_slack = false;
};

/// Over sampled sphere pairs: lambda_max(G_up - mH) <= m*eps*slack and
/// lambda_min(G_low - mH) >= -m*eps*slack.  The slack absorbs finite-m
/// fluctuation; the bounds hold in expectation at m = Omega(eps^-2 n).
GBoundReport g_upper_bound_check(const MeasurementEnsemble& A, double eps,
                                 int num_pairs, std::uint64_t seed,
                                 double slack = 1.5);

}  // namespace ampflow
