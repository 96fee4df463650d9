// Serial twins against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "slmfit/fit.hpp"
#include "slmfit/kernels.hpp"

using namespace slmfit;

namespace {

std::vector<Point2> points(int n) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<Point2> out(static_cast<std::size_t>(n));
  for (auto& p : out) p = {u(rng), u(rng)};
  return out;
}

void BM_KnnSerial(benchmark::State& state) {
  const auto pts = points(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::knn_serial(pts, 10));
}

void BM_KnnParallel(benchmark::State& state) {
  const auto pts = points(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::knn_parallel(pts, 10));
}

void BM_TracesSerial(benchmark::State& state) {
  const WeightsMatrix w = row_standardize(knn_adjacency(points(static_cast<int>(state.range(0))), 8));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::trace_powers_serial(w.mat, 30));
}

void BM_TracesParallel(benchmark::State& state) {
  const WeightsMatrix w = row_standardize(knn_adjacency(points(static_cast<int>(state.range(0))), 8));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::trace_powers_parallel(w.mat, 30));
}

ModelSpec grid_problem(int n) {
  const auto pts = points(n);
  WeightsMatrix w = row_standardize(knn_adjacency(pts, 6));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
  Eigen::VectorXd y = x.col(0) - 0.5 * x.col(1);
  for (Eigen::Index i = 0; i < n; ++i) y[i] += z(rng);
  return build(ModelKind::SEM, y, with_intercept(x, {"a", "b"}), w);
}

void BM_GridSerial(benchmark::State& state) {
  const ModelSpec spec = grid_problem(static_cast<int>(state.range(0)));
  GridOptions o;
  o.parallel = false;
  for (auto _ : state) benchmark::DoNotOptimize(explore_hypergrid(spec, o));
}

void BM_GridParallel(benchmark::State& state) {
  const ModelSpec spec = grid_problem(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(explore_hypergrid(spec));
}

}  // namespace

BENCHMARK(BM_KnnSerial)->Arg(1000)->Arg(5000);
BENCHMARK(BM_KnnParallel)->Arg(1000)->Arg(5000);
BENCHMARK(BM_TracesSerial)->Arg(500)->Arg(2000);
BENCHMARK(BM_TracesParallel)->Arg(500)->Arg(2000);
BENCHMARK(BM_GridSerial)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GridParallel)->Arg(400)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
