#include "flashcg/verify.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <set>

#include "flashcg/aggregation.hpp"
#include "flashcg/analysis.hpp"
#include "flashcg/md.hpp"
#include "flashcg/quantizer.hpp"
#include "flashcg/synthetic.hpp"

namespace flashcg {

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::uint64_t instance_seed(std::uint64_t seed, std::string_view check, std::int64_t instance) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the check name
  for (char c : check) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  std::uint64_t x = seed ^ h ^ (static_cast<std::uint64_t>(instance) * 0x9E3779B97F4A7C15ull);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class T>
double energy_error(T a, T b) {
  return std::abs(static_cast<double>(a) - static_cast<double>(b)) /
         std::max(std::abs(static_cast<double>(b)), 1e-30);
}

template <class T>
double force_error(const Positions<T>& a, const Positions<T>& b) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      diff = std::max(diff, std::abs(static_cast<double>(a[i][k]) - static_cast<double>(b[i][k])));
      scale = std::max(scale, std::abs(static_cast<double>(b[i][k])));
    }
  return diff / std::max(scale, 1e-30);
}

// Records the worst value and the instance it came from.
void track(CheckResult& r, double value, std::int64_t instance, std::uint64_t seed) {
  if (value > r.value || std::isnan(value)) {
    r.value = std::isnan(value) ? std::numeric_limits<double>::infinity() : value;
    if (!(value <= r.threshold)) {
      if (r.failing_instance < 0) {
        r.failing_instance = instance;
        r.failing_seed = seed;
      }
    }
  }
}

CheckResult make_check(std::string name, double threshold, std::string relation = "<=") {
  CheckResult r;
  r.name = std::move(name);
  r.threshold = threshold;
  r.relation = std::move(relation);
  return r;
}

void close_upper(CheckResult& r) { r.passed = r.value <= r.threshold; }

struct Instance {
  ModelParams params;
  Positions<double> positions;
  std::vector<int> types;
};

std::vector<int> random_types(std::size_t n, int num_types, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, num_types - 1);
  std::vector<int> t(n);
  for (auto& v : t) v = pick(rng);
  return t;
}

// Small randomized model and geometry; sizes vary with the seed.
Instance random_instance(std::uint64_t seed, int min_n, int max_n, double min_density, double max_density) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::initializer_list<int> v) {
    return *(v.begin() + std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng));
  };
  ModelConfig cfg;
  cfg.hidden_dim = pick({8, 16, 32});
  cfg.rbf_dim = pick({8, 16});
  cfg.filter_hidden_dim = pick({16, 32});
  cfg.readout_hidden_dim = 16;
  cfg.num_blocks = std::uniform_int_distribution<int>(1, 3)(rng);
  cfg.cutoff = std::uniform_real_distribution<double>(0.8, 1.3)(rng);
  cfg.num_atom_types = 6;
  const int n = std::uniform_int_distribution<int>(min_n, max_n)(rng);
  const double density = std::uniform_real_distribution<double>(min_density, max_density)(rng);
  Instance inst;
  inst.params = init_params(cfg, rng());
  inst.positions = random_cloud(n, std::cbrt(n / density), 0.2, rng());
  inst.types = random_types(static_cast<std::size_t>(n), cfg.num_atom_types, rng);
  return inst;
}

template <class T>
void compare_pipelines(const Instance& inst, const VerifyOptions& opts, std::int64_t i, std::uint64_t seed,
                       CheckResult& energy, CheckResult& force) {
  const auto model = Model<T>::from_params(inst.params);
  const auto pos = convert_positions<T>(inst.positions);
  const auto nl = build_neighbors_cells(pos, static_cast<T>(inst.params.config.cutoff));
  const auto ref = compute_energy_forces<T>(model, pos, inst.types, nl, BackendOptions::reference());

  static constexpr int kTiles[] = {1, 7, 64};
  BackendOptions flash = BackendOptions::flash();
  flash.workers = opts.workers;
  flash.fault = opts.fault;
  flash.tile_edges = i % 4 == 0 ? opts.tile_edges : kTiles[i % 3];
  std::vector<BackendOptions> variants{flash};
  BackendOptions ablation = flash;
  if (i % 2 == 0) ablation.segred = false;  // fused operator, scatter-free streaming
  else ablation.fused = false;              // reference blocks, segmented aggregation
  variants.push_back(ablation);

  for (const auto& v : variants) {
    const auto got = compute_energy_forces<T>(model, pos, inst.types, nl, v);
    track(energy, energy_error(got.energy, ref.energy), i, seed);
    track(force, force_error(got.forces, ref.forces), i, seed);
  }
}

}  // namespace

Positions<double> dense_cloud(int n, double min_edges_per_node, double cutoff, std::uint64_t seed) {
  const double ball = 4.0 / 3.0 * std::numbers::pi * cutoff * cutoff * cutoff;
  double box = std::cbrt(n * ball / min_edges_per_node);
  for (int attempt = 0; attempt < 64; ++attempt) {
    auto pos = random_cloud(n, box, 0.0, seed + attempt);
    const auto nl = build_neighbors_cells(pos, cutoff);
    if (static_cast<double>(nl.num_edges()) >= min_edges_per_node * n) return pos;
    box *= 0.95;
  }
  throw ConfigError("dense_cloud: could not reach the requested edge density");
}

std::vector<CheckResult> check_equivalence(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  const bool fp64 = opts.mode == RunMode::fp64;
  CheckResult energy = make_check("energy-equivalence", fp64 ? opts.tol.energy64 : opts.tol.energy32);
  CheckResult force = make_check("force-equivalence", fp64 ? opts.tol.force64 : opts.tol.force32);
  std::int64_t edges = 0;
  for (int i = 0; i < opts.sizes.systems; ++i) {
    const auto seed = instance_seed(opts.seed, "equivalence", i);
    const Instance inst = random_instance(seed, 8, 256, 0.5, 4.0);
    edges += build_neighbors_cells(inst.positions, inst.params.config.cutoff).num_edges();
    if (fp64) compare_pipelines<double>(inst, opts, i, seed, energy, force);
    else compare_pipelines<float>(inst, opts, i, seed, energy, force);
  }
  close_upper(energy);
  close_upper(force);
  const std::string detail = fmt::format("{} systems, {} mode, mean E {:.0f}", opts.sizes.systems,
                                         run_mode_name(opts.mode),
                                         static_cast<double>(edges) / opts.sizes.systems);
  energy.detail = force.detail = detail;
  energy.seconds = force.seconds = seconds_since(t0);
  return {energy, force};
}

CheckResult check_finite_differences(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("finite-difference", opts.tol.finite_difference);
  const double h = opts.tol.fd_step;
  for (int i = 0; i < opts.sizes.fd_systems; ++i) {
    const auto seed = instance_seed(opts.seed, "finite-difference", i);
    // Energy jumps where an edge crosses the cutoff, so keep every pair well clear of it.
    Instance inst;
    NeighborList nl;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) throw ConfigError("finite-difference: no valid geometry");
      inst = random_instance(seed + attempt, 8, 40, 1.0, 4.0);
      const double rc = inst.params.config.cutoff;
      bool clear = true;
      for (std::size_t a = 0; a < inst.positions.size() && clear; ++a)
        for (std::size_t b = a + 1; b < inst.positions.size(); ++b)
          if (std::abs(norm(inst.positions[a] - inst.positions[b]) - rc) < 1e-3) {
            clear = false;
            break;
          }
      nl = build_neighbors_cells(inst.positions, rc);
      if (clear && nl.num_edges() > 0) break;
    }
    const auto model = Model<double>::from_params(inst.params);
    BackendOptions flash = BackendOptions::flash();
    flash.workers = opts.workers;
    flash.fault = opts.fault;
    const auto analytic = compute_energy_forces<double>(model, inst.positions, inst.types, nl, flash);
    Positions<double> numeric(inst.positions.size());
    auto p = inst.positions;
    for (std::size_t a = 0; a < p.size(); ++a)
      for (int k = 0; k < 3; ++k) {
        const double x = p[a][k];
        p[a][k] = x + h;
        const double ep = model_energy(model, p, inst.types, nl);
        p[a][k] = x - h;
        const double em = model_energy(model, p, inst.types, nl);
        p[a][k] = x;
        numeric[a][k] = -(ep - em) / (2.0 * h);
      }
    track(r, force_error(analytic.forces, numeric), i, seed);
  }
  close_upper(r);
  r.detail = fmt::format("{} systems, fp64, step {} nm", opts.sizes.fd_systems, h);
  r.seconds = seconds_since(t0);
  return r;
}

namespace {

template <class T>
double aggregation_instance(std::mt19937_64& rng, int workers, bool hub) {
  const Index n = std::uniform_int_distribution<Index>(1, 2000)(rng);
  const Index e = hub ? 10000 : std::uniform_int_distribution<Index>(0, 10000)(rng);
  const Index d = std::uniform_int_distribution<Index>(1, 128)(rng);
  NeighborList nl;
  std::uniform_int_distribution<Index> node(0, n - 1);
  for (Index k = 0; k < e; ++k) {
    nl.src.push_back(node(rng));
    nl.dst.push_back(hub ? 0 : node(rng));
  }
  canonicalize(nl);
  Matrix<T> values(e, d);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : values.data) v = static_cast<T>(u(rng));
  const auto layout = group_by_destination(nl, n);
  const auto seg = segment_reduce(values, layout, workers);
  const auto sc = scatter_add(values, std::span<const Index>(nl.dst), n);
  double diff = 0.0;
  double scale = 1.0;
  for (std::size_t k = 0; k < sc.data.size(); ++k) {
    diff = std::max(diff, std::abs(static_cast<double>(seg.data[k]) - static_cast<double>(sc.data[k])));
    scale = std::max(scale, std::abs(static_cast<double>(sc.data[k])));
  }
  return diff / scale;
}

}  // namespace

CheckResult check_aggregation(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("aggregation", opts.tol.aggregation);
  for (int i = 0; i < opts.sizes.aggregation_instances; ++i) {
    const auto seed = instance_seed(opts.seed, "aggregation", i);
    std::mt19937_64 rng(seed);
    const int workers = 1 + i % std::max(opts.workers, 4);
    const bool hub = i % 10 == 0;
    const double err = i % 2 == 0 ? aggregation_instance<double>(rng, workers, hub)
                                  : aggregation_instance<float>(rng, workers, hub);
    track(r, err, i, seed);
  }
  close_upper(r);

  // Exact atomic counters: none on the flash path, E*D per scatter on the reference.
  const auto seed = instance_seed(opts.seed, "aggregation-atomics", 0);
  const Instance inst = random_instance(seed, 64, 128, 2.0, 4.0);
  const auto model = Model<float>::from_params(inst.params);
  const auto pos = convert_positions<float>(inst.positions);
  const auto nl = build_neighbors_cells(pos, static_cast<float>(inst.params.config.cutoff));
  BackendOptions flash = BackendOptions::flash();
  flash.workers = opts.workers;
  flash.fault = opts.fault;
  const auto f = compute_energy_forces<float>(model, pos, inst.types, nl, flash);
  const auto ref = compute_energy_forces<float>(model, pos, inst.types, nl, BackendOptions::reference());
  const std::int64_t expected = 2LL * nl.num_edges() * inst.params.config.hidden_dim * inst.params.config.num_blocks;
  if (f.traffic.atomic_updates != 0 || ref.traffic.atomic_updates != expected) {
    r.passed = false;
    r.failing_seed = seed;
  }
  r.detail = fmt::format("{} instances; atomics flash {} (want 0), reference {} (want {})",
                         opts.sizes.aggregation_instances, f.traffic.atomic_updates,
                         ref.traffic.atomic_updates, expected);
  r.seconds = seconds_since(t0);
  return r;
}

CheckResult check_neighbor_lists(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("neighbor-list", 0.0);
  std::int64_t mismatched = 0;
  for (int i = 0; i < opts.sizes.neighbor_instances; ++i) {
    const auto seed = instance_seed(opts.seed, "neighbor-list", i);
    std::mt19937_64 rng(seed);
    const int n = std::uniform_int_distribution<int>(1, 512)(rng);
    const double box = std::uniform_real_distribution<double>(0.5, 12.0)(rng);
    const double cutoff = std::uniform_real_distribution<double>(0.3, 2.0)(rng);
    auto pos = random_cloud(n, box, 0.0, rng());
    if (i % 17 == 0)  // coincident and collinear beads
      for (std::size_t k = 0; k < pos.size(); ++k) pos[k] = {0.1 * static_cast<double>(k % 5), 0.0, 0.0};
    auto as_set = [](const NeighborList& nl) {
      std::set<std::pair<Index, Index>> s;
      for (Index e = 0; e < nl.num_edges(); ++e) s.emplace(nl.dst[e], nl.src[e]);
      return s;
    };
    bool same;
    if (i % 2 == 0) {
      same = as_set(build_neighbors_cells(pos, cutoff)) == as_set(build_neighbors_bruteforce(pos, cutoff));
    } else {
      const auto p = convert_positions<float>(pos);
      const auto c = static_cast<float>(cutoff);
      same = as_set(build_neighbors_cells(p, c)) == as_set(build_neighbors_bruteforce(p, c));
    }
    if (!same) {
      ++mismatched;
      track(r, 1.0, i, seed);
    }
  }
  r.value = static_cast<double>(mismatched);
  close_upper(r);
  r.detail = fmt::format("{} configurations, {} mismatched edge sets", opts.sizes.neighbor_instances, mismatched);
  r.seconds = seconds_since(t0);
  return r;
}

CheckResult check_io_model(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("io-model", opts.tol.io_ratio, ">");
  int mismatches = 0;
  constexpr int kSystems = 6;
  for (int i = 0; i < kSystems; ++i) {
    const auto seed = instance_seed(opts.seed, "io-model", i);
    const Instance inst = random_instance(seed, 16, 128, 1.0, 4.0);
    const auto& c = inst.params.config;
    auto run = [&]<class T>(T) {
      const auto model = Model<T>::from_params(inst.params);
      const auto pos = convert_positions<T>(inst.positions);
      const auto nl = build_neighbors_cells(pos, static_cast<T>(c.cutoff));
      const IoShape shape{static_cast<std::int64_t>(pos.size()), nl.num_edges(), c.hidden_dim, c.rbf_dim,
                          c.filter_hidden_dim, c.num_blocks, static_cast<int>(sizeof(T))};
      BackendOptions flash = BackendOptions::flash();
      flash.workers = opts.workers;
      flash.fault = opts.fault;
      const auto f = compute_energy_forces<T>(model, pos, inst.types, nl, flash);
      const auto b = compute_energy_forces<T>(model, pos, inst.types, nl, BackendOptions::reference());
      if (!(f.traffic == io_model_flash(shape)) || !(b.traffic == io_model_base(shape))) {
        ++mismatches;
        if (r.failing_instance < 0) {
          r.failing_instance = i;
          r.failing_seed = seed;
        }
      }
    };
    if (i % 2 == 0) run(float{});
    else run(double{});
  }
  const IoShape paper_shape{1000, 40000, 128, 64, 128, 3, 4};
  r.value = static_cast<double>(io_model_base(paper_shape).total()) /
            static_cast<double>(io_model_flash(paper_shape).total());
  r.passed = mismatches == 0 && r.value > r.threshold;
  r.detail = fmt::format("{} of {} systems differ from the closed forms; ratio at E/N=40, D=128, D_r=64",
                         mismatches, kSystems);
  r.seconds = seconds_since(t0);
  return r;
}

CheckResult check_memory(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  ModelConfig cfg;  // D = 128, D_r = 64, T = 3
  CheckResult r = make_check("memory", cfg.hidden_dim / opts.tol.memory_ratio_divisor, ">=");
  const auto seed = instance_seed(opts.seed, "memory", 0);
  const auto params = init_params(cfg, seed);
  const auto model = Model<float>::from_params(params);
  const auto pos = convert_positions<float>(dense_cloud(400, 20.0, cfg.cutoff, seed));
  std::mt19937_64 rng(seed);
  const auto types = random_types(pos.size(), cfg.num_atom_types, rng);
  const auto nl = build_neighbors_cells(pos, static_cast<float>(cfg.cutoff));
  BackendOptions flash = BackendOptions::flash();
  flash.workers = opts.workers;
  flash.fault = opts.fault;
  const auto f = compute_energy_forces<float>(model, pos, types, nl, flash);
  const auto b = compute_energy_forces<float>(model, pos, types, nl, BackendOptions::reference());
  r.value = static_cast<double>(b.peak_transient_bytes) / static_cast<double>(std::max<std::int64_t>(f.peak_transient_bytes, 1));
  r.passed = r.value >= r.threshold;
  r.detail = fmt::format("N {} E {} (E/N {:.1f}); peak reference {} B, flash {} B", pos.size(), nl.num_edges(),
                         static_cast<double>(nl.num_edges()) / pos.size(), b.peak_transient_bytes,
                         f.peak_transient_bytes);
  if (!r.passed) r.failing_seed = seed;
  r.seconds = seconds_since(t0);
  return r;
}

namespace {

template <class T>
double time_step(const Model<T>& model, const Positions<T>& pos, std::span<const int> types,
                 const BackendOptions& options, int repeats) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < repeats; ++k) {
    const auto t0 = Clock::now();
    const auto out = flash_energy_forces<T>(model, pos, types, options);
    const double dt = seconds_since(t0);
    if (!std::isfinite(static_cast<double>(out.energy))) throw ConfigError("non-finite energy while timing");
    best = std::min(best, dt);
  }
  return best;
}

}  // namespace

CheckResult check_wall_clock(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("wall-clock", 1.0, ">=");
  ModelConfig cfg;
  const auto seed = instance_seed(opts.seed, "wall-clock", 0);
  const auto model = Model<float>::from_params(init_params(cfg, seed));
  const auto pos = convert_positions<float>(dense_cloud(2500, 20.0, cfg.cutoff, seed));
  std::mt19937_64 rng(seed);
  const auto types = random_types(pos.size(), cfg.num_atom_types, rng);
  const auto edges = build_neighbors_cells(pos, static_cast<float>(cfg.cutoff)).num_edges();
  BackendOptions flash = BackendOptions::flash();
  flash.workers = opts.workers;
  flash.fault = opts.fault;
  BackendOptions ref = BackendOptions::reference();
  ref.workers = opts.workers;
  const double tf = time_step(model, pos, types, flash, 3);
  const double tr = time_step(model, pos, types, ref, 1);
  r.value = tr / tf;
  r.passed = r.value >= r.threshold && edges >= 50000;
  r.detail = fmt::format("N {} E {} D {} T {}; step reference {:.3f} s, flash {:.3f} s", pos.size(), edges,
                         cfg.hidden_dim, cfg.num_blocks, tr, tf);
  r.seconds = seconds_since(t0);
  return r;
}

CheckResult check_quantization(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("quantization", opts.tol.quant_force_p95);
  ModelConfig cfg;
  const auto seed = instance_seed(opts.seed, "quantization", 0);
  const auto params = init_params(cfg, seed);
  std::vector<LayerQuantReport> layers;
  QuantizeOptions qo;
  qo.seed = seed;
  const auto qparams = quantize_model(params, qo, &layers);
  const auto full = Model<float>::from_params(params);
  const auto quant = Model<float>::from_params(qparams);

  int layer_count = 0;
  for_each_linear(params, [&](const std::string&, const Linear&) { ++layer_count; });
  int worse = 0;
  for (const auto& l : layers)
    if (!(l.per_channel_error <= l.per_tensor_error)) ++worse;

  BackendOptions flash = BackendOptions::flash();
  flash.workers = opts.workers;
  flash.fault = opts.fault;
  BackendOptions qflash = flash;
  qflash.quant = true;
  double energy_max = 0.0;
  std::vector<double> force_errors;
  for (int s = 0; s < opts.sizes.quant_states; ++s) {
    const auto sseed = instance_seed(opts.seed, "quantization-state", s);
    std::mt19937_64 rng(sseed);
    const int n = 64;
    const auto pos = convert_positions<float>(random_cloud(n, std::cbrt(n / 1.5), 0.3, rng()));
    const auto types = random_types(pos.size(), cfg.num_atom_types, rng);
    const auto a = flash_energy_forces<float>(full, pos, types, flash);
    const auto b = flash_energy_forces<float>(quant, pos, types, qflash);
    const double e = energy_error(b.energy, a.energy);
    if (e > energy_max) {
      energy_max = e;
      if (e > opts.tol.quant_energy && r.failing_instance < 0) {
        r.failing_instance = s;
        r.failing_seed = sseed;
      }
    }
    force_errors.push_back(force_error(b.forces, a.forces));
  }
  std::sort(force_errors.begin(), force_errors.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(force_errors.size()))) - 1;
  r.value = force_errors[std::min(idx, force_errors.size() - 1)];
  r.passed = r.value <= r.threshold && energy_max <= opts.tol.quant_energy && worse == 0 &&
             static_cast<int>(layers.size()) == layer_count;
  r.detail = fmt::format("{} states; energy max rel {:.3e} (<= {}); force p95 rel {:.3e}; {} layers, "
                         "{} with per-channel > per-tensor",
                         opts.sizes.quant_states, energy_max, opts.tol.quant_energy, r.value, layers.size(),
                         worse);
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<CheckResult> check_thermostat(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  GeneratorOptions go;
  go.shape = SystemShape::coil;
  go.beads = 32;
  go.seed = instance_seed(opts.seed, "thermostat", 0);
  const System system = generate_system(go);

  CheckResult temp = make_check("thermostat", opts.tol.temperature);
  {
    SimConfig sc;
    sc.n_steps = 100000;
    sc.output_stride = 10;
    sc.seed = go.seed;
    sc.model_forces = false;
    const auto res = run_simulation<double>(nullptr, system, sc, SimOutputs{});
    double sum = 0.0;
    int count = 0;
    for (const auto& s : res.scalars)
      if (s.step >= sc.n_steps / 5) {
        sum += s.kinetic_temperature;
        ++count;
      }
    const double mean = sum / count;
    temp.value = std::abs(mean - sc.temperature) / sc.temperature;
    temp.detail = fmt::format("{} beads, {} steps, mean kinetic T {:.2f} K over the last 80%", go.beads,
                              sc.n_steps, mean);
  }
  close_upper(temp);
  temp.seconds = seconds_since(t0);

  const auto t1 = Clock::now();
  CheckResult nve = make_check("nve-drift", opts.tol.nve_drift);
  {
    SimConfig sc;
    sc.n_steps = 10000;
    sc.output_stride = 1;
    sc.friction = 0.0;
    sc.seed = go.seed;
    sc.model_forces = false;
    const auto res = run_simulation<double>(nullptr, system, sc, SimOutputs{});
    // Mean total energy over the first and last 5% of the run; the bounded
    // integrator oscillation averages out, a secular drift does not.
    const std::size_t w = res.scalars.size() / 20;
    double first = 0.0;
    double last = 0.0;
    for (std::size_t k = 0; k < w; ++k) {
      first += res.scalars[k].total_energy;
      last += res.scalars[res.scalars.size() - 1 - k].total_energy;
    }
    first /= static_cast<double>(w);
    last /= static_cast<double>(w);
    nve.value = std::abs(last - first) / std::abs(first);
    nve.detail = fmt::format("{} steps at friction 0, window means {:.6f} -> {:.6f}", sc.n_steps, first, last);
  }
  close_upper(nve);
  nve.seconds = seconds_since(t1);
  return {temp, nve};
}

CheckResult check_metrics(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("metrics", opts.tol.q_single_tol);
  const auto seed = instance_seed(opts.seed, "metrics", 0);
  std::mt19937_64 rng(seed);
  std::vector<std::string> failures;

  // Single contact at r = r0 = 0.5 nm.
  const Positions<double> two{{0, 0, 0}, {0.5, 0, 0}, {1.0, 1.0, 0}, {2.0, 0.3, 0.4}};
  ContactSet one;
  one.pairs.push_back({0, 1, 0.5});
  const double q = fraction_native_contacts(two, one);
  r.value = std::abs(q - opts.tol.q_single);
  if (r.value > opts.tol.q_single_tol) failures.push_back(fmt::format("Q single {:.6f}", q));

  // GDT-TS of a structure with itself, and rmsd after random rigid motions.
  GeneratorOptions go;
  go.shape = SystemShape::globule;
  go.beads = 48;
  go.seed = seed;
  const auto x = generate_system(go).positions;
  const double gdt = gdt_ts(x, x).score;
  if (gdt != 1.0) failures.push_back(fmt::format("GDT-TS(X, X) = {:.17g}", gdt));
  double worst_rmsd = 0.0;
  std::normal_distribution<double> g;
  for (int k = 0; k < 20; ++k) {
    Eigen::Quaterniond quat(g(rng), g(rng), g(rng), g(rng));
    quat.normalize();
    const Eigen::Matrix3d rot = quat.toRotationMatrix();
    const Eigen::Vector3d t(10 * g(rng), 10 * g(rng), 10 * g(rng));
    Positions<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Eigen::Vector3d v = rot * Eigen::Vector3d(x[i][0], x[i][1], x[i][2]) + t;
      y[i] = {v(0), v(1), v(2)};
    }
    worst_rmsd = std::max(worst_rmsd, rmsd(y, x));
  }
  if (!(worst_rmsd <= opts.tol.rmsd_rigid)) failures.push_back(fmt::format("rigid rmsd {:.3e}", worst_rmsd));

  // Bimodal series: taller mode at 0.3, native-like mode at 0.85.
  std::vector<double> series;
  std::normal_distribution<double> low(0.3, 0.05);
  std::normal_distribution<double> high(0.85, 0.03);
  std::bernoulli_distribution which(0.6);
  for (int k = 0; k < 50000; ++k) series.push_back(std::clamp(which(rng) ? low(rng) : high(rng), 0.0, 1.0));
  const double lmq = largest_metastable_q(series);
  if (std::abs(lmq - 0.85) > 1.0 / kQBins) failures.push_back(fmt::format("largest metastable Q {:.3f}", lmq));

  r.passed = failures.empty();
  r.detail = fmt::format("Q {:.6f}, GDT-TS(X,X) {}, max rigid rmsd {:.2e}, metastable Q {:.3f}", q, gdt,
                         worst_rmsd, lmq);
  for (const auto& f : failures) r.detail += "; FAILED " + f;
  if (!r.passed) r.failing_seed = seed;
  r.seconds = seconds_since(t0);
  return r;
}

CheckResult check_degree_skew(const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult r = make_check("degree-skew", opts.tol.skew_variation);
  ModelConfig cfg;
  cfg.hidden_dim = 64;
  cfg.rbf_dim = 32;
  cfg.filter_hidden_dim = 64;
  const auto seed = instance_seed(opts.seed, "degree-skew", 0);
  const auto model = Model<float>::from_params(init_params(cfg, seed));
  constexpr int n = 2000;
  constexpr std::int64_t target = 40000;
  std::mt19937_64 rng(seed);
  const auto types = random_types(n, cfg.num_atom_types, rng);

  BackendOptions flash = BackendOptions::flash();
  flash.workers = opts.workers;
  flash.fault = opts.fault;
  BackendOptions scatter = BackendOptions::flash();
  scatter.segred = false;
  scatter.workers = opts.workers;
  BackendOptions ref = BackendOptions::reference();

  double tf[2], ts[2], tr[2];
  Index edges[2];
  for (int skewed = 0; skewed < 2; ++skewed) {
    const auto pos = convert_positions<float>(degree_skew_positions(n, target, skewed == 1, cfg.cutoff, seed));
    edges[skewed] = build_neighbors_cells(pos, static_cast<float>(cfg.cutoff)).num_edges();
    tf[skewed] = time_step(model, pos, types, flash, 5);
    ts[skewed] = time_step(model, pos, types, scatter, 3);
    tr[skewed] = time_step(model, pos, types, ref, 1);
  }
  auto variation = [](const double* t) { return std::max(t[0], t[1]) / std::min(t[0], t[1]) - 1.0; };
  r.value = variation(tf);
  close_upper(r);
  r.detail = fmt::format("E uniform {} / skewed {}; flash {:.2f} / {:.2f} ms ({:.1f}%); fused scatter "
                         "{:.2f} / {:.2f} ms ({:.1f}%); reference {:.2f} / {:.2f} ms ({:.1f}%)",
                         edges[0], edges[1], 1e3 * tf[0], 1e3 * tf[1], 100 * variation(tf), 1e3 * ts[0],
                         1e3 * ts[1], 100 * variation(ts), 1e3 * tr[0], 1e3 * tr[1], 100 * variation(tr));
  r.seconds = seconds_since(t0);
  return r;
}

const std::vector<std::string>& verify_check_names() {
  static const std::vector<std::string> names{"equivalence", "finite-difference", "aggregation",
                                              "neighbor-list", "io-model", "memory", "wall-clock",
                                              "quantization", "thermostat", "metrics", "degree-skew"};
  return names;
}

VerifyReport run_verify(const VerifyOptions& opts, const std::vector<std::string>& only) {
  for (const auto& name : only)
    if (std::find(verify_check_names().begin(), verify_check_names().end(), name) == verify_check_names().end())
      throw ConfigError("unknown verification check '" + name + "'");
  auto selected = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  VerifyReport report;
  auto add = [&](std::vector<CheckResult> rs) {
    for (auto& c : rs) report.checks.push_back(std::move(c));
  };
  const std::vector<std::pair<std::string, std::function<std::vector<CheckResult>()>>> table{
      {"equivalence", [&] { return check_equivalence(opts); }},
      {"finite-difference", [&] { return std::vector{check_finite_differences(opts)}; }},
      {"aggregation", [&] { return std::vector{check_aggregation(opts)}; }},
      {"neighbor-list", [&] { return std::vector{check_neighbor_lists(opts)}; }},
      {"io-model", [&] { return std::vector{check_io_model(opts)}; }},
      {"memory", [&] { return std::vector{check_memory(opts)}; }},
      {"wall-clock", [&] { return std::vector{check_wall_clock(opts)}; }},
      {"quantization", [&] { return std::vector{check_quantization(opts)}; }},
      {"thermostat", [&] { return check_thermostat(opts); }},
      {"metrics", [&] { return std::vector{check_metrics(opts)}; }},
      {"degree-skew", [&] { return std::vector{check_degree_skew(opts)}; }},
  };
  for (const auto& [name, fn] : table)
    if (selected(name)) add(fn());
  return report;
}

}  // namespace flashcg
