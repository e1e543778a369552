#include "commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "flashcg/analysis.hpp"
#include "flashcg/md.hpp"
#include "flashcg/params_io.hpp"
#include "flashcg/quantizer.hpp"
#include "flashcg/synthetic.hpp"
#include "flashcg/system_io.hpp"
#include "flashcg/verify.hpp"

namespace flashcg::cli {

namespace fs = std::filesystem;

RunConfig resolve_config(const GlobalFlags& flags) {
  RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.workers) cfg.workers = *flags.workers;
  if (flags.mode) cfg.mode = parse_run_mode(*flags.mode);
  if (flags.fused) cfg.sim.backend.fused = *flags.fused;
  if (flags.segred) cfg.sim.backend.segred = *flags.segred;
  if (flags.quant) cfg.sim.backend.quant = *flags.quant;
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.inject_fault) cfg.sim.backend.fault = FaultInjection::flip_filter_sign;
  cfg.finalize();
  return cfg;
}

std::string output_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

namespace {

ModelParams load_model_params(const RunConfig& cfg) {
  ModelParams params = load_params(cfg.params_path);
  if (cfg.sim.backend.quant && !params.quantized())
    throw ConfigError("--quant on needs a quantized parameter file; run 'flashcg quantize' on '" +
                      cfg.params_path + "' first");
  return params;
}

template <class T>
int simulate(const RunConfig& cfg, const System& system) {
  std::optional<Model<T>> model;
  if (cfg.sim.model_forces) model = Model<T>::from_params(load_model_params(cfg));
  std::optional<SimState<T>> resume;
  if (!cfg.resume_path.empty()) resume = read_checkpoint<T>(cfg.resume_path);

  SimOutputs outputs;
  outputs.trajectory = output_path(cfg, "trajectory.xyz");
  outputs.log = output_path(cfg, "scalars.csv");
  outputs.blowup_dump = output_path(cfg, "blowup.xyz");
  if (cfg.checkpoint_step >= 0) {
    outputs.checkpoint = output_path(cfg, "checkpoint.bin");
    outputs.checkpoint_step = cfg.checkpoint_step;
  }
  const auto result = run_simulation<T>(model ? &*model : nullptr, system, cfg.sim, outputs, std::move(resume));
  fmt::print("simulate: {} steps x {} replicas in {:.3f} s ({} mode, fused={}, segred={}, quant={})\n",
             result.steps_run, cfg.sim.replicas, result.wall_seconds, run_mode_name(cfg.mode),
             cfg.sim.backend.fused ? "on" : "off", cfg.sim.backend.segred ? "on" : "off",
             cfg.sim.backend.quant ? "on" : "off");
  if (result.steps_run > 0 && result.wall_seconds > 0.0) {
    const auto t = throughput_report(result.steps_run, cfg.sim.replicas, result.wall_seconds, cfg.sim.dt_fs);
    fmt::print("throughput: {:.1f} timestep*mol/s, {:.3f} ns/day per molecule-stream\n", t.timesteps_mol_per_s,
               t.ns_per_day);
  }
  fmt::print("wrote {} and {}\n", outputs.trajectory, outputs.log);
  return kOk;
}

}  // namespace

int cmd_simulate(const GlobalFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  cfg.require_files(true, cfg.sim.model_forces);
  const System system = read_system(cfg.system_path);
  try {
    return cfg.mode == RunMode::fp64 ? simulate<double>(cfg, system) : simulate<float>(cfg, system);
  } catch (const SimulationBlowUp& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBlowUp;
  }
}

int cmd_verify(const GlobalFlags& flags, const VerifyArgs& args) {
  const RunConfig cfg = resolve_config(flags);
  VerifyOptions opts;
  opts.seed = cfg.seed;
  opts.mode = cfg.mode;
  opts.workers = cfg.workers;
  opts.tile_edges = cfg.sim.backend.tile_edges;
  opts.sizes = cfg.verify;
  opts.fault = cfg.sim.backend.fault;
  fmt::print("verify: seed {}, {} mode, {} worker(s)\n", opts.seed, run_mode_name(opts.mode), opts.workers);
  const VerifyReport report = run_verify(opts, args.checks);
  for (const auto& c : report.checks) {
    fmt::print("{:<20} {}  value {:.4e} {} {:.4e}  ({:.1f} s)  {}\n", c.name, c.passed ? "PASS" : "FAIL", c.value,
               c.relation, c.threshold, c.seconds, c.detail);
    if (!c.passed && c.failing_instance >= 0)
      fmt::print("{:<20}       first failing instance {} (instance seed {})\n", "", c.failing_instance,
                 c.failing_seed);
  }
  if (report.passed()) {
    fmt::print("verify: all {} checks passed\n", report.checks.size());
    return kOk;
  }
  std::string failed;
  for (const auto& c : report.checks)
    if (!c.passed) failed += (failed.empty() ? "" : ", ") + c.name;
  std::cerr << "verify: FAILED checks: " << failed << "\n";
  return kVerifyFailed;
}

int cmd_quantize(const GlobalFlags& flags, const QuantizeArgs& args) {
  const RunConfig cfg = resolve_config(flags);
  const ModelParams params = load_params(args.input);
  QuantizeOptions qo;
  qo.seed = cfg.seed;
  std::vector<LayerQuantReport> layers;
  const ModelParams q = quantize_model(params, qo, &layers);
  save_params(args.output, q);

  fmt::print("{:<16} {:>5} {:>5} {:>16} {:>16}\n", "layer", "in", "out", "per_channel_err", "per_tensor_err");
  for (const auto& l : layers)
    fmt::print("{:<16} {:>5} {:>5} {:>16.6e} {:>16.6e}\n", l.name, l.in_dim, l.out_dim, l.per_channel_error,
               l.per_tensor_error);
  if (layers.empty()) fmt::print("(all layers were already quantized)\n");

  if (args.states > 0) {
    const auto full = Model<float>::from_params(params);
    const auto quant = Model<float>::from_params(load_params(args.output));
    BackendOptions f = BackendOptions::flash();
    f.workers = cfg.workers;
    BackendOptions qf = f;
    qf.quant = true;
    double worst = 0.0;
    for (int s = 0; s < args.states; ++s) {
      std::mt19937_64 rng(instance_seed(cfg.seed, "quantize-cli", s));
      const int n = 64;
      const auto pos = convert_positions<float>(random_cloud(n, std::cbrt(n / 1.5), 0.3, rng()));
      std::vector<int> types(n);
      std::uniform_int_distribution<int> pick(0, params.config.num_atom_types - 1);
      for (auto& t : types) t = pick(rng);
      const float a = flash_energy_forces<float>(full, pos, types, f).energy;
      const float b = flash_energy_forces<float>(quant, pos, types, qf).energy;
      worst = std::max(worst, std::abs(static_cast<double>(b) - a) / std::max(std::abs(static_cast<double>(a)), 1e-30));
    }
    fmt::print("quantized vs full-precision energy over {} random states: max relative error {:.3e}\n",
               args.states, worst);
  }
  fmt::print("wrote {}\n", args.output);
  return kOk;
}

int cmd_analyze(const GlobalFlags& flags, const AnalyzeArgs& args) {
  const RunConfig cfg = resolve_config(flags);
  const std::string traj_path = args.trajectory.empty() ? cfg.trajectory_path : args.trajectory;
  const std::string sys_path = args.system.empty() ? cfg.system_path : args.system;
  if (traj_path.empty()) throw ConfigError("analyze needs a trajectory (--trajectory)");
  if (sys_path.empty()) throw ConfigError("analyze needs a system file (--system)");
  const System system = read_system(sys_path);
  const auto frames = read_trajectory(traj_path);
  if (frames.empty()) throw ConfigError("trajectory '" + traj_path + "' has no frames");

  auto wants = [&](const std::string& m) {
    return args.metrics.empty() || std::find(args.metrics.begin(), args.metrics.end(), m) != args.metrics.end();
  };
  for (const auto& m : args.metrics)
    if (m != "rmsd" && m != "q" && m != "gdt" && m != "graph") throw ConfigError("unknown metric '" + m + "'");
  const bool explicit_metrics = !args.metrics.empty();
  const bool has_native = system.native.has_value();
  if (explicit_metrics && (wants("q") || wants("gdt")) && !has_native)
    throw ConfigError("Q and GDT-TS need a [native] reference in '" + sys_path + "'");
  const bool do_q = wants("q") && has_native;
  const bool do_gdt = wants("gdt") && has_native && cfg.analysis.gdt;
  const bool do_rmsd = wants("rmsd");
  const bool do_graph = wants("graph");
  const Positions<double>& reference = has_native ? *system.native : system.positions;
  ContactSet contacts;
  if (do_q) {
    contacts = build_contacts(reference, cfg.analysis.contact_cutoff, cfg.analysis.min_separation);
    if (contacts.pairs.empty()) throw ConfigError("native structure has no contacts under the contact cutoff");
  }
  const double graph_cutoff = cfg.analysis.graph_cutoff > 0.0 ? cfg.analysis.graph_cutoff : cfg.model.cutoff;

  std::vector<MetricRow> rows;
  std::vector<FrameGraphStats> graph;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.positions.size() != reference.size())
      throw ConfigError(fmt::format("frame {} has {} beads, the system has {}", f, fr.positions.size(),
                                    reference.size()));
    MetricRow row;
    row.frame = static_cast<std::int64_t>(f);
    row.step = fr.step;
    row.replica = fr.replica;
    if (do_rmsd) row.rmsd = rmsd(fr.positions, reference);
    if (do_q) row.q = fraction_native_contacts(fr.positions, contacts);
    if (do_gdt) row.gdt = gdt_ts(fr.positions, reference).score;
    if (do_graph) {
      graph.push_back(frame_graph_stats(fr.positions, graph_cutoff));
      row.edges = graph.back().edges;
    }
    rows.push_back(row);
  }

  const std::string path = output_path(cfg, "metrics.csv");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "# flashcg metrics v1\nframe,step,replica,rmsd,q,gdt_ts,edges\n";
  auto cell = [](bool on, double v) { return on ? fmt::format("{:.8f}", v) : std::string(); };
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{},{}\n", r.frame, r.step, r.replica, cell(do_rmsd, r.rmsd), cell(do_q, r.q),
                       cell(do_gdt, r.gdt), do_graph ? std::to_string(r.edges) : std::string());

  fmt::print("analyze: {} frames, reference = {}\n", rows.size(), has_native ? "native" : "system positions");
  if (do_q) {
    std::vector<double> q;
    for (const auto& r : rows) q.push_back(r.q);
    if (q.size() >= static_cast<std::size_t>(kSmoothWindow) ||
        std::all_of(q.begin(), q.end(), [&](double v) { return v == q.front(); }))
      fmt::print("largest metastable Q: {:.4f}\n", largest_metastable_q(q));
    else
      fmt::print("largest metastable Q: n/a (fewer than {} frames)\n", kSmoothWindow);
  }
  if (do_gdt) {
    // Frames in the top decile of Q (or bottom decile of RMSD without Q).
    std::vector<const MetricRow*> order;
    for (const auto& r : rows) order.push_back(&r);
    std::sort(order.begin(), order.end(), [&](const MetricRow* a, const MetricRow* b) {
      return do_q ? a->q > b->q : a->rmsd < b->rmsd;
    });
    const std::size_t k = std::max<std::size_t>(1, order.size() / 10);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += order[i]->gdt;
    fmt::print("mean GDT-TS over {} selected frames: {:.4f}\n", k, sum / static_cast<double>(k));
  }
  if (do_graph) {
    std::int64_t lo = graph.front().edges, hi = lo;
    double degree = 0.0;
    int max_degree = 0;
    for (const auto& g : graph) {
      lo = std::min(lo, g.edges);
      hi = std::max(hi, g.edges);
      degree += g.mean_degree;
      max_degree = std::max(max_degree, g.max_degree);
    }
    fmt::print("graph: E from {} to {}, mean degree {:.2f}, max degree {} (cutoff {} nm)\n", lo, hi,
               degree / static_cast<double>(graph.size()), max_degree, graph_cutoff);
  }
  fmt::print("wrote {}\n", path);
  return kOk;
}

int cmd_gen_system(const GlobalFlags& flags, const GenSystemArgs& args) {
  const RunConfig cfg = resolve_config(flags);
  GeneratorOptions go;
  if (args.shape == "coil") go.shape = SystemShape::coil;
  else if (args.shape == "helix") go.shape = SystemShape::helix;
  else if (args.shape == "globule") go.shape = SystemShape::globule;
  else throw ConfigError("shape must be coil, helix or globule");
  go.beads = args.beads;
  go.num_types = cfg.model.num_atom_types;
  go.seed = cfg.seed;
  System system = generate_system(go);
  system.energy_unit = args.energy_unit;
  energy_unit_to_kj(system.energy_unit);
  const std::string path = args.output.empty() ? output_path(cfg, "system.txt") : args.output;
  write_system(path, system);
  fmt::print("wrote {} ({} beads, {})\n", path, system.size(), args.shape);
  return kOk;
}

int cmd_init_params(const GlobalFlags& flags, const InitParamsArgs& args) {
  const RunConfig cfg = resolve_config(flags);
  const std::string path = args.output.empty() ? output_path(cfg, "params.flcg") : args.output;
  save_params(path, init_params(cfg.model, cfg.seed));
  fmt::print("wrote {} (D={}, D_r={}, T={}, cutoff {} nm)\n", path, cfg.model.hidden_dim, cfg.model.rbf_dim,
             cfg.model.num_blocks, cfg.model.cutoff);
  return kOk;
}

}  // namespace flashcg::cli
