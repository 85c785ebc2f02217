// Microbenchmarks for the fitting hot paths.

#include <benchmark/benchmark.h>

#include "r4/rng.hpp"
#include "r4/rrr.hpp"
#include "r4/solver.hpp"
#include "r4/thresholding.hpp"
#include "r4/tuning.hpp"

namespace {

r4::Matrix random_matrix(r4::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  r4::Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
  }
  return out;
}

r4::RegressionData make_data(int n, int p, int m, int r) {
  r4::Rng rng(42);
  r4::RegressionData data;
  data.X = random_matrix(rng, n, p);
  const r4::Matrix b =
      random_matrix(rng, p, r) * random_matrix(rng, r, m);
  data.Y = data.X * b + 0.1 * random_matrix(rng, n, m);
  return data;
}

void bm_rowwise_threshold(benchmark::State& state) {
  r4::Rng rng(7);
  const r4::Matrix a = random_matrix(rng, 1000, 50);
  const auto rule = r4::ThresholdRule::soft(1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(r4::rowwise_threshold(rule, a));
  }
}
BENCHMARK(bm_rowwise_threshold);

void bm_rrr_fit(benchmark::State& state) {
  const auto data = make_data(200, 40, 10, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(r4::rrr_fit(data, 3));
  }
}
BENCHMARK(bm_rrr_fit);

void bm_r4_fit(benchmark::State& state) {
  const auto data = make_data(200, 40, 10, 3);
  const r4::R4Problem problem{
      data, 3, r4::PenalizedRowwise{r4::ThresholdRule::hard(2.0)}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(r4::r4_fit(problem, r4::SolverOptions{}));
  }
}
BENCHMARK(bm_r4_fit);

void bm_session_fit(benchmark::State& state) {
  const auto data = make_data(200, 40, 10, 3);
  const r4::R4Session session(data);
  const r4::OutlierSpec spec =
      r4::PenalizedRowwise{r4::ThresholdRule::hard(2.0)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(session.fit(3, spec, r4::SolverOptions{}));
  }
}
BENCHMARK(bm_session_fit);

void bm_fit_path(benchmark::State& state) {
  const auto data = make_data(100, 12, 8, 3);
  r4::GridSpec grid;
  grid.ranks = {1, 2, 3, 4};
  grid.lambda_count = 50;
  for (auto _ : state) {
    benchmark::DoNotOptimize(r4::fit_path(data, grid, r4::SolverOptions{}));
  }
}
BENCHMARK(bm_fit_path);

}  // namespace

BENCHMARK_MAIN();
