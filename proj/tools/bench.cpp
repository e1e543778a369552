#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>

#include "commands.hpp"
#include "flashcg/md.hpp"
#include "flashcg/params_io.hpp"
#include "flashcg/parallel.hpp"
#include "flashcg/quantizer.hpp"
#include "flashcg/verify.hpp"

namespace flashcg::cli {

namespace {

constexpr const char* kBenchHeader = "# flashcg bench v1";
constexpr const char* kBenchColumns =
    "replicas,mode,fused,segred,quant,beads,edges,wall_ms_per_step,timesteps_mol_per_s,io_base_bytes,"
    "io_flash_bytes,io_ratio,io_measured_bytes,peak_transient_bytes,layout_ms,speedup_vs_reference";

struct CellResult {
  double seconds_per_step = 0.0;
  std::int64_t edges = 0;
  std::int64_t measured_bytes = 0;
  std::int64_t peak_bytes = 0;
  double layout_ms = 0.0;
};

template <class T>
CellResult run_cell(const Model<T>& model, const std::vector<Positions<T>>& replicas,
                    const std::vector<int>& types, BackendOptions backend, int workers, int steps, int warmup) {
  const int R = static_cast<int>(replicas.size());
  backend.workers = R > 1 ? 1 : workers;
  std::vector<EnergyForces<T>> last(static_cast<std::size_t>(R));
  std::vector<Index> edges(static_cast<std::size_t>(R));
  auto step = [&] {
    parallel_for(static_cast<std::size_t>(R), R > 1 ? workers : 1, [&](std::size_t b, std::size_t e, std::size_t) {
      for (std::size_t r = b; r < e; ++r) {
        const auto nl = build_neighbors_cells(replicas[r], model.rbf.cutoff);
        edges[r] = nl.num_edges();
        last[r] = compute_energy_forces<T>(model, replicas[r], types, nl, backend);
      }
    });
  };
  for (int k = 0; k < warmup; ++k) step();
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < steps; ++k) step();
  CellResult c;
  c.seconds_per_step = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / steps;
  c.edges = edges[0];
  c.measured_bytes = last[0].traffic.total();
  for (const auto& l : last) {
    c.peak_bytes = std::max(c.peak_bytes, l.peak_transient_bytes);
    c.layout_ms += l.layout_ms / R;
  }
  return c;
}

template <class T>
int bench(const RunConfig& cfg, const GlobalFlags& flags) {
  ModelParams params = cfg.params_path.empty() ? init_params(cfg.model, cfg.seed) : load_params(cfg.params_path);
  const bool want_quant = cfg.sim.backend.quant;
  std::optional<Model<T>> qmodel;
  if (want_quant) {
    QuantizeOptions qo;
    qo.seed = cfg.seed;
    qmodel = Model<T>::from_params(params.quantized() ? params : quantize_model(params, qo));
  }
  const auto model = Model<T>::from_params(params);
  const auto& mc = params.config;

  const auto base = dense_cloud(cfg.bench.beads, cfg.bench.edges_per_node, mc.cutoff, cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> types(base.size());
  std::uniform_int_distribution<int> pick(0, mc.num_atom_types - 1);
  for (auto& t : types) t = pick(rng);

  std::vector<BackendOptions> cells;
  if (flags.backend_overridden()) {
    cells.push_back(cfg.sim.backend);
  } else {
    for (bool fused : {false, true})
      for (bool segred : {false, true}) {
        BackendOptions b = cfg.sim.backend;
        b.fused = fused;
        b.segred = segred;
        b.quant = false;
        cells.push_back(b);
      }
    if (want_quant) {
      BackendOptions b = cfg.sim.backend;
      b.fused = b.segred = b.quant = true;
      cells.push_back(b);
    }
  }

  const std::string path = output_path(cfg, "bench.csv");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << kBenchHeader << '\n' << kBenchColumns << '\n';
  std::cout << kBenchHeader << '\n' << kBenchColumns << '\n';

  for (int R : cfg.bench.replicas) {
    // Replicas are independent thermal perturbations of the same geometry.
    std::vector<Positions<T>> replicas;
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int r = 0; r < R; ++r) {
      std::mt19937_64 g(instance_seed(cfg.seed, "bench-replica", r));
      auto p = base;
      for (auto& v : p)
        for (auto& x : v) x += noise(g);
      replicas.push_back(convert_positions<T>(p));
    }
    const CellResult ref = run_cell(model, replicas, types, BackendOptions::reference(), cfg.workers,
                                    cfg.bench.steps, cfg.bench.warmup);
    for (const auto& backend : cells) {
      const bool is_ref = !backend.fused && !backend.segred && !backend.quant;
      const CellResult c = is_ref ? ref
                                  : run_cell(backend.quant ? *qmodel : model, replicas, types, backend, cfg.workers,
                                             cfg.bench.steps, cfg.bench.warmup);
      const IoShape shape{static_cast<std::int64_t>(base.size()), c.edges, mc.hidden_dim, mc.rbf_dim,
                          mc.filter_hidden_dim, mc.num_blocks, static_cast<int>(sizeof(T))};
      const auto io_base = io_model_base(shape).total();
      const auto io_flash = io_model_flash(shape).total();
      const std::string row = fmt::format(
          "{},{},{},{},{},{},{},{:.4f},{:.3f},{},{},{:.4f},{},{},{:.4f},{:.4f}", R, run_mode_name(cfg.mode),
          backend.fused ? "on" : "off", backend.segred ? "on" : "off", backend.quant ? "on" : "off", base.size(),
          c.edges, 1e3 * c.seconds_per_step, R / c.seconds_per_step, io_base, io_flash,
          static_cast<double>(io_base) / static_cast<double>(io_flash), c.measured_bytes, c.peak_bytes, c.layout_ms,
          ref.seconds_per_step / c.seconds_per_step);
      out << row << '\n';
      std::cout << row << '\n';
    }
  }
  std::cout << "wrote " << path << '\n';
  return kOk;
}

}  // namespace

int cmd_bench(const GlobalFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  if (!cfg.params_path.empty()) cfg.require_files(false, true);
  return cfg.mode == RunMode::fp64 ? bench<double>(cfg, flags) : bench<float>(cfg, flags);
}

}  // namespace flashcg::cli
