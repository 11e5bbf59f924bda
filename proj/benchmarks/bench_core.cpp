// Microbenchmarks for the hot paths: signed/split applications, spectral
// norm estimation, kernel application, sup-deviation estimation, and one
// solver iteration worth of work.

#include <benchmark/benchmark.h>

#include <Eigen/Core>

#include "ampflow/concentration.hpp"
#include "ampflow/kernels.hpp"
#include "ampflow/linalg.hpp"
#include "ampflow/measurement.hpp"
#include "ampflow/rng.hpp"
#include "ampflow/solver.hpp"

namespace {

using ampflow::MeasurementEnsemble;
using ampflow::Rng;
using ampflow::VarianceConvention;

struct Fixture {
  MeasurementEnsemble A;
  Eigen::VectorXd x_star;
  Eigen::VectorXd y;
  Eigen::VectorXd x;

  static Fixture make(Eigen::Index m, Eigen::Index n) {
    Rng root(9001);
    MeasurementEnsemble A = ampflow::sample_ensemble(
        m, n, VarianceConvention::OneOverM, root.child(0).key());
    Rng xr = root.child(1);
    Eigen::VectorXd x_star = ampflow::unit_sphere_vector(xr, n);
    Eigen::VectorXd y =
        ampflow::forward_model(A, x_star, Eigen::VectorXd::Zero(m)).y;
    Rng pr = root.child(2);
    Eigen::VectorXd x = x_star + 0.1 * ampflow::unit_sphere_vector(pr, n);
    return Fixture{std::move(A), std::move(x_star), std::move(y),
                   std::move(x)};
  }
};

void BM_ApplySigned(benchmark::State& state) {
  const auto f = Fixture::make(state.range(0), state.range(1));
  Eigen::VectorXd z = f.x;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ampflow::apply_signed(f.A, f.x, z));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) *
                          state.range(1));
}
BENCHMARK(BM_ApplySigned)->Args({1000, 100})->Args({10000, 50});

void BM_SubgradientStep(benchmark::State& state) {
  const auto f = Fixture::make(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ampflow::subgradient(f.A, f.y, f.x));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) *
                          state.range(1));
}
BENCHMARK(BM_SubgradientStep)->Args({1000, 100})->Args({10000, 50});

void BM_SpectralNorm(benchmark::State& state) {
  const auto f = Fixture::make(state.range(0), state.range(1));
  const auto op = ampflow::LinearOperator::from_matrix(f.A.entries());
  for (auto _ : state) {
    benchmark::DoNotOptimize(ampflow::spectral_norm(op, 1e-6, 1000));
  }
}
BENCHMARK(BM_SpectralNorm)->Args({1000, 100})->Args({5000, 50});

void BM_KernelApply(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  Rng rng(9002);
  const Eigen::VectorXd x = ampflow::unit_sphere_vector(rng, n);
  const Eigen::VectorXd y = ampflow::unit_sphere_vector(rng, n);
  const auto kernel = ampflow::phi(x, y);
  const Eigen::VectorXd z = ampflow::gaussian_vector(rng, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernel.apply(z));
  }
}
BENCHMARK(BM_KernelApply)->Arg(100)->Arg(1000);

void BM_MdcDeviation(benchmark::State& state) {
  const auto f = Fixture::make(state.range(0), 50);
  Rng rng(9003);
  const Eigen::VectorXd x = ampflow::unit_sphere_vector(rng, 50);
  const Eigen::VectorXd y = ampflow::unit_sphere_vector(rng, 50);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ampflow::mdc_deviation(
        f.A, x, y, ampflow::DeviationFamily::FullMDC, 1e-6, 2000));
  }
}
BENCHMARK(BM_MdcDeviation)->Arg(500)->Arg(2500);

void BM_SpectralInit(benchmark::State& state) {
  const auto f = Fixture::make(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ampflow::spectral_init(f.A, f.y));
  }
}
BENCHMARK(BM_SpectralInit)->Args({1000, 100});

void BM_SolveToConvergence(benchmark::State& state) {
  const auto f = Fixture::make(state.range(0), state.range(1));
  ampflow::SolverConfig cfg;
  cfg.max_iters = 200;
  cfg.tol = 1e-12;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ampflow::solve(f.A, f.y, f.x, cfg, &f.x_star));
  }
}
BENCHMARK(BM_SolveToConvergence)->Args({3000, 100});

}  // namespace
