#include <benchmark/benchmark.h>

#include <random>

#include "flashcg/evaluation.hpp"
#include "flashcg/synthetic.hpp"
#include "flashcg/verify.hpp"

using namespace flashcg;

namespace {

struct Workload {
  Model<float> model;
  Positions<float> positions;
  std::vector<int> types;

  explicit Workload(int beads) {
    ModelConfig cfg;
    model = Model<float>::from_params(init_params(cfg, 1));
    positions = convert_positions<float>(dense_cloud(beads, 24.0, cfg.cutoff, 2));
    std::mt19937_64 rng(3);
    for (int i = 0; i < beads; ++i) types.push_back(static_cast<int>(rng() % cfg.num_atom_types));
  }
};

void run(benchmark::State& state, const BackendOptions& options) {
  static Workload w(512);
  for (auto _ : state) {
    auto out = flash_energy_forces(w.model, w.positions, w.types, options);
    benchmark::DoNotOptimize(out.energy);
  }
}

void BM_StepReference(benchmark::State& state) { run(state, BackendOptions::reference()); }
void BM_StepFlash(benchmark::State& state) { run(state, BackendOptions::flash()); }
void BM_StepFusedScatter(benchmark::State& state) {
  auto o = BackendOptions::flash();
  o.segred = false;
  run(state, o);
}

}  // namespace

BENCHMARK(BM_StepReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StepFlash)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StepFusedScatter)->Unit(benchmark::kMillisecond);
