#include <benchmark/benchmark.h>

#include <random>

#include "ihmpc/certificates.hpp"
#include "ihmpc/qp.hpp"
#include "ihmpc/simulator.hpp"

using namespace ihmpc;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int r, int c) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

void BM_QpSolveBoxed(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const Matrix A = random_matrix(rng, n, n);
  QuadProgram qp = make_qp(A.transpose() * A + Matrix::Identity(n, n), 5.0 * random_matrix(rng, n, 1));
  qp.Aeq = random_matrix(rng, 1, n);
  qp.beq = Vector::Zero(1);
  qp.Aineq = Matrix::Identity(n, n);
  qp.lo = Vector::Constant(n, -0.3);
  qp.hi = Vector::Constant(n, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(solve(qp));
}
BENCHMARK(BM_QpSolveBoxed)->Arg(4)->Arg(16)->Arg(48);

void BM_TerminalWeight(benchmark::State& state) {
  const int nd = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  Matrix F = random_matrix(rng, nd, nd);
  F *= 0.9 / spectral_radius(F);
  const Matrix Psi = random_matrix(rng, 2, nd);
  const Matrix Q = Matrix::Identity(2, 2);
  for (auto _ : state) benchmark::DoNotOptimize(terminal_weight(F, Psi, Q));
}
BENCHMARK(BM_TerminalWeight)->Arg(4)->Arg(8)->Arg(16);

void BM_ClosedLoopScalar(benchmark::State& state) {
  SetpointParams p{OpomModel(scalar(2.0), scalar(0.6), scalar(-1.2), scalar(1.0))};
  p.m = 3;
  p.Q = p.R = scalar(1.0);
  p.S = scalar(50.0);
  p.U = Rectangle::symmetric(Vector::Constant(1, 2.0));
  p.dU = Rectangle::symmetric(Vector::Constant(1, 0.5));
  p.r = Vector::Constant(1, 1.0);
  const ControllerSpec spec{SetpointSpec(p)};
  for (auto _ : state) benchmark::DoNotOptimize(run_closed_loop(spec, 100));
}
BENCHMARK(BM_ClosedLoopScalar);

}  // namespace

BENCHMARK_MAIN();
