#include "flashcg/md.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include "flashcg/binary_io.hpp"
#include "flashcg/neighbor.hpp"
#include "flashcg/parallel.hpp"

namespace flashcg {

double energy_unit_to_kj(const std::string& unit) {
  if (unit == "kJ/mol") return 1.0;
  if (unit == "kcal/mol") return kKcalToKJ;
  throw ConfigError("unknown energy unit '" + unit + "'");
}

template <class T>
PriorResult<T> prior_energy_forces(const Positions<T>& positions, const PriorSpec& prior) {
  PriorResult<T> out;
  out.forces.assign(positions.size(), Vec3<T>{});
  const auto n = static_cast<Index>(positions.size());
  for (const auto& b : prior.bonds) {
    if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n || b.i == b.j)
      throw ContractViolation("prior bond refers to invalid beads");
    const Vec3<T> u = positions[b.i] - positions[b.j];
    const T r = norm(u);
    const T dr = r - static_cast<T>(b.r0);
    const T k = static_cast<T>(b.k);
    out.energy += T(0.5) * k * dr * dr;
    if (r < T(1e-12)) continue;
    const T s = -k * dr / r;  // force on i along u
    for (int c = 0; c < 3; ++c) {
      out.forces[b.i][c] += s * u[c];
      out.forces[b.j][c] -= s * u[c];
    }
  }
  return out;
}

void SimConfig::validate() const {
  if (!(dt_fs > 0.0) || !std::isfinite(dt_fs)) throw ConfigError("dt must be > 0");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(friction >= 0.0)) throw ConfigError("friction must be >= 0");
  if (n_steps < 0) throw ConfigError("n_steps must be >= 0");
  if (replicas < 1) throw ConfigError("replicas must be >= 1");
  if (first_replica < 0) throw ConfigError("first_replica must be >= 0");
  if (neighbor_stride < 1) throw ConfigError("neighbor_stride must be >= 1");
  if (output_stride < 1) throw ConfigError("output_stride must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double counter_gaussian(std::uint64_t seed, std::int64_t replica, std::int64_t step,
                        std::uint64_t index) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(replica));
  h = splitmix(h ^ static_cast<std::uint64_t>(step));
  h = splitmix(h ^ index);
  const std::uint64_t h2 = splitmix(h ^ 0xD1B54A32D192ED03ull);
  const double u1 = static_cast<double>((h >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <class T>
double kinetic_energy(const Positions<T>& v, const std::vector<double>& masses) {
  double ke = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double v2 = static_cast<double>(v[i][0]) * v[i][0] + static_cast<double>(v[i][1]) * v[i][1] +
                      static_cast<double>(v[i][2]) * v[i][2];
    ke += 0.5 * masses[i] * v2;
  }
  return ke;
}

template <class T>
double kinetic_temperature(const Positions<T>& v, const std::vector<double>& masses) {
  if (v.empty()) return 0.0;
  return 2.0 * kinetic_energy(v, masses) / (3.0 * static_cast<double>(v.size()) * kBoltzmannKJ);
}

template <class T>
void langevin_step(ReplicaState<T>& s, const std::vector<double>& masses,
                   const SimConfig& config, double energy_to_kj, std::int64_t replica,
                   std::int64_t step, const ForceFn<T>& forces) {
  const double dt = config.dt_fs * 1e-3;  // ps
  const T half = static_cast<T>(0.5 * dt);
  const T c1 = static_cast<T>(std::exp(-config.friction * dt));
  const double c2 = std::sqrt(-std::expm1(-2.0 * config.friction * dt));
  const double kT = kBoltzmannKJ * config.temperature;
  const std::size_t n = s.positions.size();

  for (std::size_t i = 0; i < n; ++i) {
    const T inv_m = static_cast<T>(energy_to_kj / masses[i]);
    for (int k = 0; k < 3; ++k) {
      s.velocities[i][k] += half * s.forces[i][k] * inv_m;
      s.positions[i][k] += half * s.velocities[i][k];
    }
  }
  if (c2 > 0.0 && kT > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double sigma = c2 * std::sqrt(kT / masses[i]);
      for (int k = 0; k < 3; ++k) {
        const double xi = counter_gaussian(config.seed, replica, step, 3 * i + k);
        s.velocities[i][k] = c1 * s.velocities[i][k] + static_cast<T>(sigma * xi);
      }
    }
  } else {
    for (auto& v : s.velocities)
      for (auto& x : v) x *= c1;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) s.positions[i][k] += half * s.velocities[i][k];

  forces(s);

  for (std::size_t i = 0; i < n; ++i) {
    const T inv_m = static_cast<T>(energy_to_kj / masses[i]);
    for (int k = 0; k < 3; ++k) s.velocities[i][k] += half * s.forces[i][k] * inv_m;
  }
}

template <class T>
SimState<T> initial_state(const System& system, const SimConfig& config) {
  system.validate();
  config.validate();
  SimState<T> state;
  state.masses = system.masses;
  state.seed = config.seed;
  const std::size_t n = system.positions.size();
  const double kT = kBoltzmannKJ * config.temperature;
  for (int r = 0; r < config.replicas; ++r) {
    ReplicaState<T> s;
    s.positions = convert_positions<T>(system.positions);
    s.velocities.assign(n, Vec3<T>{});
    s.forces.assign(n, Vec3<T>{});
    if (config.thermalize && kT > 0.0) {
      const std::int64_t replica = config.first_replica + r;
      std::array<double, 3> p{};
      double mass = 0.0;
      std::vector<Vec3<double>> v(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double sigma = std::sqrt(kT / system.masses[i]);
        for (int k = 0; k < 3; ++k) {
          v[i][k] = sigma * counter_gaussian(config.seed, replica, -1, 3 * i + k);
          p[k] += system.masses[i] * v[i][k];
        }
        mass += system.masses[i];
      }
      for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) s.velocities[i][k] = static_cast<T>(v[i][k] - p[k] / mass);
    }
    state.replicas.push_back(std::move(s));
  }
  return state;
}

namespace {

template <class T>
struct ReplicaRuntime {
  NeighborList nl;
  CsrLayout dst;
  CsrLayout src;
};

template <class T>
void check_blowup(const ReplicaState<T>& s, double limit, std::int64_t step, int replica) {
  auto fail = [&](const std::string& why) {
    throw SimulationBlowUp(fmt::format("simulation blew up at step {} (replica {}): {}", step, replica, why),
                           step, replica);
  };
  if (!std::isfinite(static_cast<double>(s.potential)) || !std::isfinite(static_cast<double>(s.prior)))
    fail("non-finite energy");
  for (std::size_t i = 0; i < s.forces.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double f = static_cast<double>(s.forces[i][k]);
      if (!std::isfinite(f)) fail(fmt::format("non-finite force on bead {}", i));
      if (std::abs(f) > limit) fail(fmt::format("force {:.3g} on bead {} exceeds {:.3g}", f, i, limit));
    }
}

template <class T>
TrajectoryFrame make_frame(const ReplicaState<T>& s, const System& system, std::int64_t step, int replica) {
  return {step, replica, system.types, convert_positions<double>(s.positions)};
}

}  // namespace

template <class T>
SimulationResult<T> run_simulation(const Model<T>* model, const System& system,
                                   const SimConfig& config, const SimOutputs& outputs,
                                   std::optional<SimState<T>> resume) {
  system.validate();
  config.validate();
  const double escale = energy_unit_to_kj(system.energy_unit);
  const bool use_model = model != nullptr && config.model_forces;
  if (use_model) check_types(system.types, system.positions.size(), model->config.num_atom_types);
  PriorSpec prior{system.bonds};

  SimulationResult<T> result;
  const bool resumed = resume.has_value();
  result.state = resumed ? std::move(*resume) : initial_state<T>(system, config);
  SimState<T>& state = result.state;
  if (static_cast<int>(state.replicas.size()) != config.replicas)
    throw ConfigError(fmt::format("checkpoint has {} replicas, config asks for {}", state.replicas.size(),
                                  config.replicas));
  if (state.seed != config.seed) throw ConfigError("checkpoint was written with a different seed");
  if (state.masses.size() != system.positions.size())
    throw ConfigError("checkpoint bead count does not match the system");

  const int R = config.replicas;
  // Replicas run in parallel with serial evaluation each, or one replica uses all workers.
  const int outer_workers = R > 1 ? config.workers : 1;
  BackendOptions backend = config.backend;
  backend.workers = R > 1 ? 1 : config.workers;
  std::vector<ReplicaRuntime<T>> runtime(static_cast<std::size_t>(R));

  auto rebuild = [&](ReplicaRuntime<T>& rt, const Positions<T>& at) {
    rt.nl = build_neighbors_cells(at, static_cast<T>(model->config.cutoff));
    if (backend.segred) {
      const auto n = static_cast<Index>(at.size());
      rt.dst = group_by_destination(rt.nl, n);
      rt.src = group_by_source(rt.nl, n);
    }
  };
  auto evaluate = [&](ReplicaState<T>& s, ReplicaRuntime<T>& rt, std::int64_t step) {
    const std::size_t n = s.positions.size();
    s.forces.assign(n, Vec3<T>{});
    s.potential = T(0);
    s.prior = T(0);
    if (use_model) {
      if (step % config.neighbor_stride == 0) {
        s.neighbor_positions = s.positions;
        rebuild(rt, s.positions);
      }
      const auto ef = compute_energy_forces<T>(*model, s.positions, system.types, rt.nl, backend,
                                               backend.segred ? &rt.dst : nullptr,
                                               backend.segred ? &rt.src : nullptr);
      s.potential = ef.energy;
      s.forces = ef.forces;
    }
    if (config.prior_forces) {
      const auto p = prior_energy_forces(s.positions, prior);
      s.prior = p.energy;
      for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) s.forces[i][k] += p.forces[i][k];
    }
  };

  std::ofstream traj;
  std::ofstream log;
  if (!outputs.trajectory.empty()) {
    traj.open(outputs.trajectory);
    if (!traj) throw ConfigError("cannot write trajectory '" + outputs.trajectory + "'");
  }
  if (!outputs.log.empty()) {
    log.open(outputs.log);
    if (!log) throw ConfigError("cannot write log '" + outputs.log + "'");
    log << kScalarLogHeader << '\n' << kScalarLogColumns << '\n';
  }

  auto emit = [&](std::int64_t step, double wall_ms) {
    for (int r = 0; r < R; ++r) {
      const auto& s = state.replicas[r];
      StepScalars sc;
      sc.step = step;
      sc.replica = config.first_replica + r;
      sc.potential = static_cast<double>(s.potential);
      sc.prior = static_cast<double>(s.prior);
      sc.kinetic_temperature = kinetic_temperature(s.velocities, state.masses);
      sc.total_energy = sc.potential + sc.prior + kinetic_energy(s.velocities, state.masses) / escale;
      sc.wall_ms = wall_ms;
      result.scalars.push_back(sc);
      if (log) log << fmt::format("{},{},{:.10g},{:.10g},{:.6f},{:.3f}\n", sc.step, sc.replica,
                                  sc.potential, sc.prior, sc.kinetic_temperature, sc.wall_ms);
      if (traj || outputs.keep_frames) {
        auto frame = make_frame(s, system, step, sc.replica);
        if (traj) write_xyz_frame(traj, frame);
        if (outputs.keep_frames) result.frames.push_back(std::move(frame));
      }
    }
  };

  auto guarded = [&](auto&& body) {
    try {
      body();
    } catch (const SimulationBlowUp& e) {
      if (!outputs.blowup_dump.empty()) {
        std::ofstream dump(outputs.blowup_dump);
        const int r = e.replica - config.first_replica;
        if (dump && r >= 0 && r < R) write_xyz_frame(dump, make_frame(state.replicas[r], system, e.step, e.replica));
      }
      throw;
    }
  };

  const auto run_start = std::chrono::steady_clock::now();
  guarded([&] {
    if (resumed) {
      if (use_model)
        for (int r = 0; r < R; ++r) rebuild(runtime[r], state.replicas[r].neighbor_positions);
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      parallel_for(static_cast<std::size_t>(R), outer_workers, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t r = b; r < e; ++r) {
          evaluate(state.replicas[r], runtime[r], state.step);
          check_blowup(state.replicas[r], config.blowup_force, state.step, config.first_replica + static_cast<int>(r));
        }
      });
      emit(state.step, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }

    while (state.step < config.n_steps) {
      const std::int64_t step = state.step;
      const auto t0 = std::chrono::steady_clock::now();
      parallel_for(static_cast<std::size_t>(R), outer_workers, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t r = b; r < e; ++r) {
          const std::int64_t replica = config.first_replica + static_cast<std::int64_t>(r);
          ForceFn<T> fn = [&](ReplicaState<T>& s) { evaluate(s, runtime[r], step + 1); };
          langevin_step<T>(state.replicas[r], state.masses, config, escale, replica, step, fn);
          check_blowup(state.replicas[r], config.blowup_force, step + 1, static_cast<int>(replica));
        }
      });
      state.step = step + 1;
      ++result.steps_run;
      const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (state.step % config.output_stride == 0) emit(state.step, wall_ms);
      if (!outputs.checkpoint.empty() && state.step == outputs.checkpoint_step)
        write_checkpoint(outputs.checkpoint, state);
    }
  });
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
  return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'F', 'L', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
TensorRecord positions_record(const std::string& name, const Positions<T>& p) {
  TensorRecord t;
  t.name = name;
  t.tag = TensorTag::fp64;
  t.dims = {static_cast<std::uint32_t>(p.size()), 3};
  for (const auto& v : p)
    for (T x : v) t.f64.push_back(static_cast<double>(x));
  return t;
}

template <class T>
Positions<T> read_positions(BinaryReader& r, const std::string& name, std::size_t n) {
  TensorRecord t = read_tensor(r);
  if (t.name != name || t.tag != TensorTag::fp64 || t.dims.size() != 2 || t.dims[0] != n || t.dims[1] != 3)
    throw ConfigError(r.path() + ": expected tensor '" + name + "'");
  Positions<T> p(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) p[i][k] = static_cast<T>(t.f64[3 * i + k]);
  return p;
}

}  // namespace

template <class T>
void write_checkpoint(const std::string& path, const SimState<T>& state) {
  BinaryWriter w(path);
  w.bytes(std::string(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(sizeof(T)));
  w.u64(static_cast<std::uint64_t>(state.step));
  w.u64(state.seed);
  w.u32(static_cast<std::uint32_t>(state.replicas.size()));
  w.u32(static_cast<std::uint32_t>(state.masses.size()));
  TensorRecord masses;
  masses.name = "masses";
  masses.tag = TensorTag::fp64;
  masses.dims = {static_cast<std::uint32_t>(state.masses.size())};
  masses.f64 = state.masses;
  write_tensor(w, masses);
  for (std::size_t r = 0; r < state.replicas.size(); ++r) {
    const auto& s = state.replicas[r];
    const std::string p = "replica" + std::to_string(r) + ".";
    write_tensor(w, positions_record(p + "positions", s.positions));
    write_tensor(w, positions_record(p + "velocities", s.velocities));
    write_tensor(w, positions_record(p + "forces", s.forces));
    write_tensor(w, positions_record(p + "neighbor_positions",
                                     s.neighbor_positions.empty() ? s.positions : s.neighbor_positions));
    w.f64(static_cast<double>(s.potential));
    w.f64(static_cast<double>(s.prior));
  }
  w.close();
}

template <class T>
SimState<T> read_checkpoint(const std::string& path) {
  BinaryReader r(path);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw ConfigError(path + ": not a checkpoint file");
  if (r.u32() != kCheckpointVersion) throw ConfigError(path + ": unsupported checkpoint version");
  if (r.u8() != sizeof(T))
    throw ConfigError(path + ": checkpoint precision does not match the requested mode");
  SimState<T> state;
  state.step = static_cast<std::int64_t>(r.u64());
  state.seed = r.u64();
  const std::uint32_t replicas = r.u32();
  const std::uint32_t n = r.u32();
  TensorRecord masses = read_tensor(r);
  if (masses.name != "masses" || masses.f64.size() != n) throw ConfigError(path + ": malformed masses");
  state.masses = masses.f64;
  for (std::uint32_t k = 0; k < replicas; ++k) {
    ReplicaState<T> s;
    const std::string p = "replica" + std::to_string(k) + ".";
    s.positions = read_positions<T>(r, p + "positions", n);
    s.velocities = read_positions<T>(r, p + "velocities", n);
    s.forces = read_positions<T>(r, p + "forces", n);
    s.neighbor_positions = read_positions<T>(r, p + "neighbor_positions", n);
    s.potential = static_cast<T>(r.f64());
    s.prior = static_cast<T>(r.f64());
    state.replicas.push_back(std::move(s));
  }
  if (!r.at_end()) throw ConfigError(path + ": trailing bytes after checkpoint");
  return state;
}

ThroughputReport throughput_report(std::int64_t steps, int replicas, double wall_seconds,
                                   double dt_fs) {
  if (!(wall_seconds > 0.0) || !std::isfinite(wall_seconds))
    throw ConfigError("throughput: elapsed wall time must be positive");
  ThroughputReport t;
  t.timesteps_mol_per_s = static_cast<double>(steps) * replicas / wall_seconds;
  t.ns_per_day = t.timesteps_mol_per_s * dt_fs * 86400.0 / 1e6;
  return t;
}

#define FLASHCG_INSTANTIATE(T)                                                                  \
  template PriorResult<T> prior_energy_forces<T>(const Positions<T>&, const PriorSpec&);        \
  template double kinetic_energy<T>(const Positions<T>&, const std::vector<double>&);           \
  template double kinetic_temperature<T>(const Positions<T>&, const std::vector<double>&);      \
  template void langevin_step<T>(ReplicaState<T>&, const std::vector<double>&,                  \
                                 const SimConfig&, double, std::int64_t, std::int64_t,          \
                                 const ForceFn<T>&);                                            \
  template SimState<T> initial_state<T>(const System&, const SimConfig&);                       \
  template SimulationResult<T> run_simulation<T>(const Model<T>*, const System&,                \
                                                 const SimConfig&, const SimOutputs&,           \
                                                 std::optional<SimState<T>>);                   \
  template void write_checkpoint<T>(const std::string&, const SimState<T>&);                    \
  template SimState<T> read_checkpoint<T>(const std::string&);

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
