// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "bipc/kernels.hpp"
#include "bipc/rng.hpp"

namespace {

using namespace bipc;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    Kernel(a, b, out);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void bm_pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix p = random_matrix(n, 8, 3), q = random_matrix(n, 8, 4);
  Matrix out(n * n, 8);
  for (auto _ : state) {
    Kernel(p, q, out);
    benchmark::DoNotOptimize(out.values().data());
  }
}

template <void (*Kernel)(const Matrix&, Matrix&)>
void bm_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix x = random_matrix(n, 64, 5);
  Matrix out(n, 64);
  for (auto _ : state) {
    Kernel(x, out);
    benchmark::DoNotOptimize(out.values().data());
  }
}

}  // namespace

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_pairwise<kernels::serial::pairwise_add>)->Name("pairwise_add/serial")->Arg(32)->Arg(256);
BENCHMARK(bm_pairwise<kernels::parallel::pairwise_add>)->Name("pairwise_add/parallel")->Arg(32)->Arg(256);
BENCHMARK(bm_softmax<kernels::serial::row_softmax>)->Name("row_softmax/serial")->Arg(256)->Arg(4096);
BENCHMARK(bm_softmax<kernels::parallel::row_softmax>)->Name("row_softmax/parallel")->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
