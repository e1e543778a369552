#include <benchmark/benchmark.h>

#include "flashcg/neighbor.hpp"
#include "flashcg/synthetic.hpp"

using namespace flashcg;

namespace {

void BM_NeighborsBruteForce(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto x = random_cloud(n, std::cbrt(n / 2.0), 0.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_neighbors_bruteforce(x, 1.0).src.data());
}

void BM_NeighborsCells(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto x = random_cloud(n, std::cbrt(n / 2.0), 0.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_neighbors_cells(x, 1.0).src.data());
}

}  // namespace

BENCHMARK(BM_NeighborsBruteForce)->Arg(512)->Arg(2048);
BENCHMARK(BM_NeighborsCells)->Arg(512)->Arg(2048)->Arg(8192);
