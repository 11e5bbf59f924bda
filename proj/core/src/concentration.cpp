#include "ampflow/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ampflow/rng.hpp"

namespace ampflow {
namespace {

constexpr std::uint64_t kRefineChildIndex = 0x7FFFFFFFFFFFFFFFULL;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double indicator_product(DeviationFamily kind, double ax, double ay) {
  const double sx = ax > 0.0 ? 1.0 : (ax < 0.0 ? -1.0 : 0.0);
  const double sy = ay > 0.0 ? 1.0 : (ay < 0.0 ? -1.0 : 0.0);
  switch (kind) {
    case DeviationFamily::FullMDC:
      return sx * sy;
    case DeviationFamily::PlusPlus:
      return (ax > 0.0 && ay > 0.0) ? 1.0 : 0.0;
    case DeviationFamily::MinusMinus:
      return (ax < 0.0 && ay < 0.0) ? 1.0 : 0.0;
    case DeviationFamily::PlusMinus:
      return (ax > 0.0 && ay < 0.0) ? 1.0 : 0.0;
    case DeviationFamily::MinusPlus:
      return (ax < 0.0 && ay > 0.0) ? 1.0 : 0.0;
  }
  return 0.0;
}

void require_one_over_m(const MeasurementEnsemble& A, const char* who) {
  if (A.convention() != VarianceConvention::OneOverM) {
    throw std::invalid_argument(std::string(who) +
                                " requires the OneOverM convention");
  }
}

/// Fixed-step power iteration on Delta^2 for a batch of pairs, advanced in
/// lockstep so the two matvecs per step become matrix-matrix products.
/// Column p starts from Z0.col(p); the returned estimates are Rayleigh
/// quotients from below and are non-decreasing in `steps`.
Eigen::VectorXd batch_scan(const MeasurementEnsemble& A, DeviationFamily kind,
                           const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                           const Eigen::MatrixXd& Z0, int steps) {
  const Eigen::Index n = A.n();
  const Eigen::Index m = A.m();
  const Eigen::Index P = X.cols();

  RowMatrixXd W(m, P);
  {
    const Eigen::MatrixXd AX = A.entries() * X;
    const Eigen::MatrixXd AY = A.entries() * Y;
    for (Eigen::Index p = 0; p < P; ++p) {
      for (Eigen::Index i = 0; i < m; ++i) {
        W(i, p) = indicator_product(kind, AX(i, p), AY(i, p));
      }
    }
  }

  std::vector<ExpectationKernel> kernels;
  kernels.reserve(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    kernels.push_back(family_kernel(kind, X.col(p), Y.col(p)));
  }

  Eigen::MatrixXd Z(n, P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const double norm = Z0.col(p).norm();
    Z.col(p) = norm > 0.0 ? (Z0.col(p) / norm).eval() : Z0.col(p);
  }

  auto delta_apply = [&](const Eigen::MatrixXd& in) {
    Eigen::MatrixXd t = A.entries() * in;          // m x P
    t.array() *= W.array();                        // row weights per pair
    Eigen::MatrixXd out = A.entries().transpose() * t;  // n x P
    for (Eigen::Index p = 0; p < P; ++p) {
      out.col(p) -= kernels[static_cast<std::size_t>(p)].apply(in.col(p));
    }
    return out;
  };

  Eigen::VectorXd rq = Eigen::VectorXd::Zero(P);
  Eigen::VectorXd frozen = Eigen::VectorXd::Zero(P);
  for (int s = 0; s < steps; ++s) {
    const Eigen::MatrixXd V2 = delta_apply(delta_apply(Z));
    for (Eigen::Index p = 0; p < P; ++p) {
      if (frozen[p] != 0.0) continue;
      rq[p] = Z.col(p).dot(V2.col(p));
      const double norm = V2.col(p).norm();
      if (norm == 0.0) {
        frozen[p] = 1.0;  // annihilated: the estimate on this subspace is rq
        continue;
      }
      Z.col(p) = V2.col(p) / norm;
    }
  }
  Eigen::VectorXd devs(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    devs[p] = std::sqrt(std::max(rq[p], 0.0));
  }
  return devs;
}

double scan_single(const MeasurementEnsemble& A, DeviationFamily kind,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& z0, int steps) {
  Eigen::MatrixXd X(x.size(), 1), Y(y.size(), 1), Z0(z0.size(), 1);
  X.col(0) = x;
  Y.col(0) = y;
  Z0.col(0) = z0;
  return batch_scan(A, kind, X, Y, Z0, steps)[0];
}

/// Polished estimate: same start vector, power iteration with a Rayleigh
/// stopping rule.  Never converging is fine here; the last Rayleigh quotient
/// is still a valid lower estimate, so no error is raised.
double polish_deviation(const MeasurementEnsemble& A, DeviationFamily kind,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& z0, double tol, int max_iters) {
  const Eigen::VectorXd ax = A.entries() * x;
  const Eigen::VectorXd ay = A.entries() * y;
  Eigen::VectorXd w(ax.size());
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    w[i] = indicator_product(kind, ax[i], ay[i]);
  }
  const ExpectationKernel kernel = family_kernel(kind, x, y);
  auto delta = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd t = A.entries() * z;
    t.array() *= w.array();
    Eigen::VectorXd out = A.entries().transpose() * t;
    out -= kernel.apply(z);
    return out;
  };

  Eigen::VectorXd z = z0;
  const double zn = z.norm();
  if (zn == 0.0) return 0.0;
  z /= zn;
  double rq = 0.0;
  double rq_prev = -1.0;
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd v2 = delta(delta(z));
    rq = z.dot(v2);
    const double norm = v2.norm();
    if (norm == 0.0) break;
    z = v2 / norm;
    if (it > 0 && std::abs(rq - rq_prev) <= tol * std::max(std::abs(rq), 1e-300)) {
      break;
    }
    rq_prev = rq;
  }
  return std::sqrt(std::max(rq, 0.0));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto idx = static_cast<std::size_t>(std::llround(pos));
  return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace

std::string to_string(DeviationFamily kind) {
  switch (kind) {
    case DeviationFamily::FullMDC:
      return "FullMDC";
    case DeviationFamily::PlusPlus:
      return "PlusPlus";
    case DeviationFamily::MinusMinus:
      return "MinusMinus";
    case DeviationFamily::PlusMinus:
      return "PlusMinus";
    case DeviationFamily::MinusPlus:
      return "MinusPlus";
  }
  return "FullMDC";
}

std::string ConcentrationReport::to_json() const {
  std::ostringstream out;
  out << "{\"m\":" << m << ",\"n\":" << n << ",\"kind\":\"" << to_string(kind)
      << "\",\"num_pairs\":" << num_pairs
      << ",\"max_dev\":" << format_double(max_dev)
      << ",\"mean_dev\":" << format_double(mean_dev) << ",\"quantiles\":[";
  for (std::size_t i = 0; i < quantiles.size(); ++i) {
    if (i) out << ',';
    out << format_double(quantiles[i]);
  }
  out << "],\"refined_max_dev\":" << format_double(refined_max_dev)
      << ",\"seed\":" << seed << "}";
  return out.str();
}

ExpectationKernel family_kernel(DeviationFamily kind, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y) {
  switch (kind) {
    case DeviationFamily::FullMDC:
      return phi(x, y);
    case DeviationFamily::PlusPlus:
    case DeviationFamily::MinusMinus:
      return q_kernel(x, y);
    case DeviationFamily::PlusMinus:
    case DeviationFamily::MinusPlus:
      return h_kernel(x, y);
  }
  return phi(x, y);
}

Eigen::VectorXd family_weights(DeviationFamily kind, const Eigen::VectorXd& ax,
                               const Eigen::VectorXd& ay) {
  if (ax.size() != ay.size()) {
    throw std::invalid_argument("family_weights dimension mismatch");
  }
  Eigen::VectorXd w(ax.size());
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    w[i] = indicator_product(kind, ax[i], ay[i]);
  }
  return w;
}

LinearOperator deviation_operator(const MeasurementEnsemble& A,
                                  const Eigen::VectorXd& weights,
                                  const ExpectationKernel& kernel) {
  if (weights.size() != A.m() || kernel.dim() != A.n()) {
    throw std::invalid_argument("deviation_operator dimension mismatch");
  }
  // Captures A and kernel by reference: both must outlive the operator.
  return LinearOperator::symmetric(
      A.n(),
      [&A, weights, &kernel](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        Eigen::VectorXd t = A.entries() * z;
        t.array() *= weights.array();
        Eigen::VectorXd out = A.entries().transpose() * t;
        out -= kernel.apply(z);
        return out;
      });
}

double mdc_deviation(const MeasurementEnsemble& A, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& y, DeviationFamily kind, double tol,
                     int max_iters) {
  require_one_over_m(A, "mdc_deviation");
  if (x.size() != A.n() || y.size() != A.n()) {
    throw std::invalid_argument("mdc_deviation dimension mismatch");
  }
  const Eigen::VectorXd w =
      family_weights(kind, A.entries() * x, A.entries() * y);
  const ExpectationKernel kernel = family_kernel(kind, x, y);
  const LinearOperator op = deviation_operator(A, w, kernel);
  return spectral_norm(op, tol, max_iters);
}

ConcentrationReport empirical_sup_deviation(const MeasurementEnsemble& A,
                                            DeviationFamily kind,
                                            int num_pairs, int refine_steps,
                                            std::uint64_t seed,
                                            const SupSearchBudget& budget,
                                            const PairCallback& on_pair) {
  require_one_over_m(A, "empirical_sup_deviation");
  if (num_pairs < 1) {
    throw std::invalid_argument("empirical_sup_deviation requires num_pairs >= 1");
  }
  const Eigen::Index n = A.n();
  const Rng root(seed);

  ConcentrationReport report;
  report.m = A.m();
  report.n = n;
  report.kind = kind;
  report.num_pairs = num_pairs;
  report.seed = seed;

  std::vector<double> devs(static_cast<std::size_t>(num_pairs));
  double max_dev = 0.0;
  Eigen::VectorXd best_x, best_y, best_z0;

  const int batch = std::max(1, budget.batch_pairs);
  Eigen::MatrixXd X(n, batch), Y(n, batch), Z0(n, batch);
  for (int start = 0; start < num_pairs; start += batch) {
    const int count = std::min(batch, num_pairs - start);
    for (int j = 0; j < count; ++j) {
      Rng pair_rng = root.child(static_cast<std::uint64_t>(start + j));
      X.col(j) = unit_sphere_vector(pair_rng, n);
      Y.col(j) = unit_sphere_vector(pair_rng, n);
      Z0.col(j) = gaussian_vector(pair_rng, n);
    }
    const Eigen::VectorXd vals =
        batch_scan(A, kind, X.leftCols(count), Y.leftCols(count),
                   Z0.leftCols(count), budget.scan_steps);
    for (int j = 0; j < count; ++j) {
      const int index = start + j;
      devs[static_cast<std::size_t>(index)] = vals[j];
      if (on_pair) {
        on_pair(PairDeviation{index, angle_between(X.col(j), Y.col(j)).theta,
                              vals[j]});
      }
      if (vals[j] >= max_dev) {
        max_dev = vals[j];
        best_x = X.col(j);
        best_y = Y.col(j);
        best_z0 = Z0.col(j);
      }
    }
  }

  report.max_dev = max_dev;
  report.mean_dev =
      std::accumulate(devs.begin(), devs.end(), 0.0) / devs.size();
  std::vector<double> sorted = devs;
  std::sort(sorted.begin(), sorted.end());
  report.quantiles = {quantile_sorted(sorted, 0.50),
                      quantile_sorted(sorted, 0.90),
                      quantile_sorted(sorted, 0.99)};

  // Local perturbation ascent from the worst sampled pair.  Candidates are
  // compared at a fixed shared budget; the incumbent is re-scored at that
  // budget first so comparisons are like for like.
  Rng refine_rng = root.child(kRefineChildIndex);
  double best_val = scan_single(A, kind, best_x, best_y, best_z0,
                                budget.refine_steps_per_eval);
  double radius = 0.3;
  int non_improving = 0;
  for (int step = 0; step < refine_steps; ++step) {
    Eigen::VectorXd cx = best_x + radius * gaussian_vector(refine_rng, n);
    Eigen::VectorXd cy = best_y + radius * gaussian_vector(refine_rng, n);
    const Eigen::VectorXd cz0 = gaussian_vector(refine_rng, n);
    const double cxn = cx.norm();
    const double cyn = cy.norm();
    if (cxn == 0.0 || cyn == 0.0) continue;
    cx /= cxn;
    cy /= cyn;
    const double val =
        scan_single(A, kind, cx, cy, cz0, budget.refine_steps_per_eval);
    if (val > best_val) {
      best_val = val;
      best_x = std::move(cx);
      best_y = std::move(cy);
      best_z0 = cz0;
      non_improving = 0;
    } else if (++non_improving % 10 == 0) {
      radius *= 0.9;
    }
  }
  const double polished =
      polish_deviation(A, kind, best_x, best_y, best_z0, budget.polish_tol,
                       budget.polish_max_iters);
  // All estimates are lower bounds of the same supremum, so taking the max
  // both sharpens the report and enforces refined_max_dev >= max_dev.
  report.refined_max_dev = std::max({polished, best_val, max_dev});
  return report;
}

double relaxed_indicator(double t, RelaxedIndicator which, double eps) {
  if (eps <= 0.0) {
    throw std::invalid_argument("relaxed_indicator requires eps > 0");
  }
  switch (which) {
    case RelaxedIndicator::PlusOuter:  // phi+_{-eps}
      if (t <= -eps) return 0.0;
      if (t <= 0.0) return 1.0 + t / eps;
      return 1.0;
    case RelaxedIndicator::PlusInner:  // phi+_{eps}
      if (t < 0.0) return 0.0;
      if (t < eps) return t / eps;
      return 1.0;
    case RelaxedIndicator::MinusOuter:  // phi-_{-eps}
      if (t <= -eps) return 1.0;
      if (t <= 0.0) return -t / eps;
      return 0.0;
    case RelaxedIndicator::MinusInner:  // phi-_{eps}
      if (t < 0.0) return 1.0;
      if (t < eps) return 1.0 - t / eps;
      return 0.0;
  }
  return 0.0;
}

Eigen::VectorXd g_weights(const MeasurementEnsemble& V,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          double eps, EnvelopeSide side) {
  if (x.size() != V.n() || y.size() != V.n()) {
    throw std::invalid_argument("g_weights dimension mismatch");
  }
  const Eigen::VectorXd vx = V.entries() * x;
  const Eigen::VectorXd vy = V.entries() * y;
  const RelaxedIndicator plus = side == EnvelopeSide::Up
                                    ? RelaxedIndicator::PlusOuter
                                    : RelaxedIndicator::PlusInner;
  const RelaxedIndicator minus = side == EnvelopeSide::Up
                                     ? RelaxedIndicator::MinusInner
                                     : RelaxedIndicator::MinusOuter;
  Eigen::VectorXd w(V.m());
  for (Eigen::Index i = 0; i < V.m(); ++i) {
    w[i] = relaxed_indicator(vx[i], plus, eps) *
           relaxed_indicator(vy[i], minus, eps);
  }
  return w;
}

Eigen::MatrixXd g_matrix(const MeasurementEnsemble& V, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& y, double eps,
                         EnvelopeSide side) {
  const Eigen::VectorXd w = g_weights(V, x, y, eps, side);
  return V.entries().transpose() * w.asDiagonal() * V.entries();
}

LinearOperator weighted_gram_operator(const MeasurementEnsemble& V,
                                      Eigen::VectorXd weights) {
  if (weights.size() != V.m()) {
    throw std::invalid_argument("weighted_gram_operator dimension mismatch");
  }
  // Captures V by reference: it must outlive the operator.
  return LinearOperator::symmetric(
      V.n(),
      [&V, w = std::move(weights)](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        Eigen::VectorXd t = V.entries() * z;
        t.array() *= w.array();
        return V.entries().transpose() * t;
      });
}

double g_quadratic_form(const MeasurementEnsemble& V, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, const Eigen::VectorXd& u,
                        double eps, EnvelopeSide side) {
  if (std::abs(u.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("g_quadratic_form requires a unit vector u");
  }
  const Eigen::VectorXd w = g_weights(V, x, y, eps, side);
  const Eigen::VectorXd vu = V.entries() * u;
  return w.cwiseProduct(vu).dot(vu) / static_cast<double>(V.m());
}

double h_quadratic_form(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& u) {
  if (std::abs(u.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("h_quadratic_form requires a unit vector u");
  }
  const ExpectationKernel H = h_kernel(x, y);
  return u.dot(H.apply(u));
}

ThetaMembership theta_membership(const MeasurementEnsemble& V) {
  if (V.convention() != VarianceConvention::Unit) {
    throw std::invalid_argument(
        "theta_membership is defined for the Unit convention only");
  }
  ThetaMembership result;
  result.norm = spectral_norm(LinearOperator::from_matrix(V.entries()), 1e-6,
                              20000);
  result.max_row_norm = V.entries().rowwise().norm().maxCoeff();
  const double m = static_cast<double>(V.m());
  const double n = static_cast<double>(V.n());
  result.in_theta = result.norm <= 3.0 * std::sqrt(m) &&
                    result.max_row_norm <= std::sqrt(2.0 * n);
  return result;
}

BallCheck pseudo_lipschitz_ball_check(const MeasurementEnsemble& V,
                                      const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& u, double eps) {
  if (eps <= 0.0) {
    throw std::invalid_argument("pseudo_lipschitz_ball_check requires eps > 0");
  }
  if (z.size() != V.n() || u.size() != V.n()) {
    throw std::invalid_argument("pseudo_lipschitz_ball_check dimension mismatch");
  }
  BallCheck check;
  const Eigen::VectorXd vz = V.entries() * z;
  const Eigen::VectorXd vu = V.entries() * u;
  check.lhs = vz.cwiseAbs().dot(vu.cwiseProduct(vu));
  check.threshold = eps * eps * static_cast<double>(V.m());
  check.member = check.lhs <= check.threshold;
  return check;
}

PseudoLipschitzCheck pseudo_lipschitz_property_check(
    const MeasurementEnsemble& V, const Eigen::VectorXd& x,
    const Eigen::VectorXd& y, const Eigen::VectorXd& x_tilde,
    const Eigen::VectorXd& y_tilde, const Eigen::VectorXd& u, double eps) {
  PseudoLipschitzCheck check;
  const BallCheck bx = pseudo_lipschitz_ball_check(V, x - x_tilde, u, eps);
  const BallCheck by = pseudo_lipschitz_ball_check(V, y - y_tilde, u, eps);
  check.precondition_ok = bx.member && by.member;
  check.delta_g = std::abs(g_quadratic_form(V, x, y, u, eps, EnvelopeSide::Up) -
                           g_quadratic_form(V, x_tilde, y_tilde, u, eps,
                                            EnvelopeSide::Up));
  check.satisfied = check.delta_g <= 2.0 * eps;
  return check;
}

StripExpectationCheck indicator_strip_expectation_check(
    const Eigen::VectorXd& x, double eps, int num_samples, std::uint64_t seed) {
  if (x.norm() == 0.0) {
    throw std::invalid_argument(
        "indicator_strip_expectation_check requires x != 0");
  }
  if (eps <= 0.0 || num_samples < 1) {
    throw std::invalid_argument(
        "indicator_strip_expectation_check requires eps > 0 and samples >= 1");
  }
  const Eigen::Index n = x.size();
  Rng rng(seed);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  long hits = 0;
  for (int s = 0; s < num_samples; ++s) {
    const Eigen::VectorXd a = gaussian_vector(rng, n);
    const double t = a.dot(x);
    if (t >= -eps && t <= 0.0) {
      sum.selfadjointView<Eigen::Lower>().rankUpdate(a, 1.0);
      ++hits;
    }
  }
  Eigen::MatrixXd mean =
      Eigen::MatrixXd(sum.selfadjointView<Eigen::Lower>()) /
      static_cast<double>(num_samples);

  StripExpectationCheck check;
  check.num_samples = num_samples;
  check.bound = eps / (2.0 * x.norm());
  check.max_eig_estimate =
      spectral_norm(LinearOperator::from_matrix(std::move(mean)), 1e-8, 20000);
  const double p_hat =
      std::max(static_cast<double>(hits), 1.0) / num_samples;
  // Coarse operator-norm scale of the Monte Carlo error.
  check.std_error =
      std::sqrt(3.0 * p_hat / num_samples) * std::sqrt(static_cast<double>(n));
  return check;
}

GBoundReport g_upper_bound_check(const MeasurementEnsemble& A, double eps,
                                 int num_pairs, std::uint64_t seed,
                                 double slack) {
  if (A.convention() != VarianceConvention::Unit) {
    throw std::invalid_argument(
        "g_upper_bound_check is defined for the Unit convention only");
  }
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::invalid_argument("g_upper_bound_check requires eps in (0,1)");
  }
  GBoundReport report;
  report.num_pairs = num_pairs;
  report.slack = slack;
  report.eps = eps;
  const double m = static_cast<double>(A.m());
  const Rng root(seed);
  double worst_up = -std::numeric_limits<double>::infinity();
  double worst_low = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < num_pairs; ++p) {
    Rng rng = root.child(static_cast<std::uint64_t>(p));
    const Eigen::VectorXd x = unit_sphere_vector(rng, A.n());
    const Eigen::VectorXd y = unit_sphere_vector(rng, A.n());
    const Eigen::MatrixXd mh = m * h_kernel(x, y).matrix();
    const Eigen::MatrixXd up = g_matrix(A, x, y, eps, EnvelopeSide::Up) - mh;
    const Eigen::MatrixXd low = g_matrix(A, x, y, eps, EnvelopeSide::Low) - mh;
    const double lambda_max_up =
        -min_eigenvalue(LinearOperator::from_matrix(-up), 1e-8, 20000);
    const double lambda_min_low =
        min_eigenvalue(LinearOperator::from_matrix(low), 1e-8, 20000);
    worst_up = std::max(worst_up, lambda_max_up / (m * eps));
    worst_low = std::max(worst_low, -lambda_min_low / (m * eps));
  }
  report.worst_upper_margin = worst_up;
  report.worst_lower_margin = worst_low;
  report.all_within_slack = worst_up <= slack && worst_low <= slack;
  return report;
}

}  // namespace ampflow
