#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flashcg/evaluation.hpp"
#include "flashcg/synthetic.hpp"
#include "flashcg/system_io.hpp"

namespace flashcg {

inline constexpr double kBoltzmannKJ = 0.0083144626;    // kJ/mol/K
inline constexpr double kBoltzmannKcal = 0.0019872043;  // kcal/mol/K
inline constexpr double kKcalToKJ = 4.184;

// Energies are in the system's unit; the integrator works in kJ/mol, nm, ps, amu.
double energy_unit_to_kj(const std::string& unit);

struct PriorSpec {
  std::vector<Bond> bonds;
};

template <class T>
struct PriorResult {
  T energy{};
  Positions<T> forces;
};

// E = sum 1/2 k (|r_i - r_j| - r0)^2 with analytic forces.
template <class T>
PriorResult<T> prior_energy_forces(const Positions<T>& positions, const PriorSpec& prior);

struct SimConfig {
  double dt_fs = 4.0;
  double temperature = 300.0;  // K
  double friction = 1.0;       // 1/ps
  std::int64_t n_steps = 0;
  int replicas = 1;
  int first_replica = 0;  // random-stream index of replica 0
  std::uint64_t seed = 0;
  int neighbor_stride = 1;
  int output_stride = 100;
  int workers = 1;
  BackendOptions backend;
  bool model_forces = true;
  bool prior_forces = true;
  bool thermalize = true;  // Maxwell-Boltzmann initial velocities, zero net momentum
  double blowup_force = 1e6;

  void validate() const;
};

template <class T>
struct ReplicaState {
  Positions<T> positions;
  Positions<T> velocities;
  Positions<T> forces;  // at `positions`
  T potential{};        // model energy
  T prior{};
  Positions<T> neighbor_positions;  // positions at the last neighbor-list build
};

template <class T>
struct SimState {
  std::vector<ReplicaState<T>> replicas;
  std::vector<double> masses;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

// Standard normal from a counter-based stream keyed by (seed, replica, step, index).
double counter_gaussian(std::uint64_t seed, std::int64_t replica, std::int64_t step,
                        std::uint64_t index);

template <class T>
double kinetic_energy(const Positions<T>& velocities, const std::vector<double>& masses);

// 2 KE / (3 N k_B), kJ/mol units.
template <class T>
double kinetic_temperature(const Positions<T>& velocities, const std::vector<double>& masses);

// Evaluates forces, potential and prior at s.positions.
template <class T>
using ForceFn = std::function<void(ReplicaState<T>&)>;

// One BAOAB step: B A O A with the forces in `s`, then a force evaluation at
// the new positions and the closing B. Noise is drawn from the stream of
// (config.seed, replica, step).
template <class T>
void langevin_step(ReplicaState<T>& s, const std::vector<double>& masses,
                   const SimConfig& config, double energy_to_kj, std::int64_t replica,
                   std::int64_t step, const ForceFn<T>& forces);

class SimulationBlowUp : public std::runtime_error {
 public:
  SimulationBlowUp(const std::string& what, std::int64_t step, int replica)
      : std::runtime_error(what), step(step), replica(replica) {}
  std::int64_t step;
  int replica;
};

struct StepScalars {
  std::int64_t step = 0;
  int replica = 0;
  double potential = 0.0;
  double prior = 0.0;
  double kinetic_temperature = 0.0;
  double total_energy = 0.0;  // potential + prior + kinetic, system energy unit
  double wall_ms = 0.0;
};

struct SimOutputs {
  std::string trajectory;  // XYZ frames; empty: not written
  std::string log;         // CSV scalars; empty: not written
  std::string checkpoint;
  std::int64_t checkpoint_step = -1;
  std::string blowup_dump;  // frame written when the run blows up
  bool keep_frames = false;
};

inline constexpr const char* kScalarLogHeader = "# flashcg scalar log v1";
inline constexpr const char* kScalarLogColumns = "step,replica,potential,prior,kinetic_T,wall_ms";

template <class T>
struct SimulationResult {
  SimState<T> state;
  std::vector<StepScalars> scalars;
  std::vector<TrajectoryFrame> frames;
  std::int64_t steps_run = 0;
  double wall_seconds = 0.0;
};

template <class T>
SimState<T> initial_state(const System& system, const SimConfig& config);

// `model` may be null for prior-only runs. Resumes from `resume` when given.
template <class T>
SimulationResult<T> run_simulation(const Model<T>* model, const System& system,
                                   const SimConfig& config, const SimOutputs& outputs,
                                   std::optional<SimState<T>> resume = std::nullopt);

template <class T>
void write_checkpoint(const std::string& path, const SimState<T>& state);
template <class T>
SimState<T> read_checkpoint(const std::string& path);

struct ThroughputReport {
  double timesteps_mol_per_s = 0.0;
  double ns_per_day = 0.0;
};

// steps x replicas / wall seconds; ns/day = that x dt_fs x 86400 / 1e6.
ThroughputReport throughput_report(std::int64_t steps, int replicas, double wall_seconds,
                                   double dt_fs);

}  // namespace flashcg
