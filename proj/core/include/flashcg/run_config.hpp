#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flashcg/md.hpp"
#include "flashcg/model.hpp"
#include "flashcg/text_config.hpp"

namespace flashcg {

enum class RunMode { fp32, fp64 };

// Sizes of the randomized oracle suite.
struct VerifySettings {
  int systems = 200;          // flash vs reference
  int fd_systems = 20;        // finite differences (fp64)
  int aggregation_instances = 100;
  int neighbor_instances = 100;
  int quant_states = 100;
};

struct BenchSettings {
  std::vector<int> replicas{1};
  int beads = 256;
  double edges_per_node = 24.0;
  int steps = 3;
  int warmup = 1;
};

struct AnalysisSettings {
  double contact_cutoff = 0.9;  // nm
  int min_separation = 3;
  bool gdt = true;
  double graph_cutoff = 0.0;  // 0: use the model cutoff
};

// Sections: [run] [model] [sim] [backend] [files] [verify] [bench] [analysis].
// Unknown sections or keys are rejected with "<file>:<line>: ...".
struct RunConfig {
  std::string source = "<defaults>";
  std::uint64_t seed = 0;
  RunMode mode = RunMode::fp32;
  int workers = 1;
  std::string out_dir = ".";

  ModelConfig model;
  SimConfig sim;  // sim.backend carries fused/segred/quant/tile_edges
  std::int64_t checkpoint_step = -1;

  std::string system_path;
  std::string params_path;
  std::string resume_path;
  std::string trajectory_path;  // analyze input

  VerifySettings verify;
  BenchSettings bench;
  AnalysisSettings analysis;

  // Copies run-level seed/workers into the simulation settings and validates.
  void finalize();
  // Paths that the command needs must exist and be readable.
  void require_files(bool system, bool params) const;
};

RunConfig parse_run_config(const TextDocument& doc);
RunConfig load_run_config(const std::string& path);
std::string run_mode_name(RunMode mode);
RunMode parse_run_mode(const std::string& text);

}  // namespace flashcg
