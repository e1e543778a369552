#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flashcg/evaluation.hpp"
#include "flashcg/run_config.hpp"

namespace flashcg {

// Tolerances of the oracle suite.
struct Tolerances {
  double energy32 = 1e-5;
  double energy64 = 1e-10;
  double force32 = 1e-4;
  double force64 = 1e-9;
  double finite_difference = 1e-5;
  double fd_step = 1e-5;  // nm
  double aggregation = 1e-6;
  double io_ratio = 10.0;  // strict lower bound
  double memory_ratio_divisor = 4.0;  // ratio >= D / 4
  double quant_energy = 1e-2;
  double quant_force_p95 = 3e-2;
  double temperature = 0.05;
  double nve_drift = 1e-4;
  double q_single = 0.92414;
  double q_single_tol = 1e-5;
  double rmsd_rigid = 1e-10;
  double skew_variation = 0.25;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  RunMode mode = RunMode::fp32;  // precision of the flash/reference comparison
  int workers = 1;
  int tile_edges = 128;
  VerifySettings sizes;
  FaultInjection fault = FaultInjection::none;
  Tolerances tol;
};

struct CheckResult {
  std::string name;
  bool passed = true;
  double value = 0.0;      // measured error or ratio
  double threshold = 0.0;
  std::string relation = "<=";
  std::int64_t failing_instance = -1;
  std::uint64_t failing_seed = 0;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

// Reproducible per-instance seed.
std::uint64_t instance_seed(std::uint64_t seed, std::string_view check, std::int64_t instance);

// Energy (first) and force (second) equivalence of flash vs reference.
std::vector<CheckResult> check_equivalence(const VerifyOptions& opts);
CheckResult check_finite_differences(const VerifyOptions& opts);
CheckResult check_aggregation(const VerifyOptions& opts);
CheckResult check_neighbor_lists(const VerifyOptions& opts);
CheckResult check_io_model(const VerifyOptions& opts);
CheckResult check_memory(const VerifyOptions& opts);
CheckResult check_wall_clock(const VerifyOptions& opts);
CheckResult check_quantization(const VerifyOptions& opts);
// Equipartition (first) and NVE drift (second).
std::vector<CheckResult> check_thermostat(const VerifyOptions& opts);
CheckResult check_metrics(const VerifyOptions& opts);
CheckResult check_degree_skew(const VerifyOptions& opts);

// Names accepted by run_verify's filter.
const std::vector<std::string>& verify_check_names();

// Runs the selected checks (all when `only` is empty).
VerifyReport run_verify(const VerifyOptions& opts, const std::vector<std::string>& only = {});

// Geometry with at least `min_edges_per_node` directed edges per bead under `cutoff`.
Positions<double> dense_cloud(int n, double min_edges_per_node, double cutoff, std::uint64_t seed);

}  // namespace flashcg
