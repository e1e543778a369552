#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flashcg/evaluation.hpp"
#include "flashcg/run_config.hpp"

namespace flashcg::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kVerifyFailed = 2, kBlowUp = 3 };

// Command-line overrides applied on top of the config file.
struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> mode;
  std::optional<bool> fused;
  std::optional<bool> segred;
  std::optional<bool> quant;
  std::optional<std::string> out;
  bool inject_fault = false;

  bool backend_overridden() const { return fused || segred || quant; }
};

RunConfig resolve_config(const GlobalFlags& flags);

int cmd_simulate(const GlobalFlags& flags);

struct VerifyArgs {
  std::vector<std::string> checks;
};
int cmd_verify(const GlobalFlags& flags, const VerifyArgs& args);

int cmd_bench(const GlobalFlags& flags);

struct QuantizeArgs {
  std::string input;
  std::string output;
  int states = 100;
};
int cmd_quantize(const GlobalFlags& flags, const QuantizeArgs& args);

struct AnalyzeArgs {
  std::string trajectory;
  std::string system;
  std::vector<std::string> metrics;  // empty: everything the inputs allow
};
int cmd_analyze(const GlobalFlags& flags, const AnalyzeArgs& args);

struct GenSystemArgs {
  std::string shape = "coil";
  int beads = 32;
  std::string energy_unit = "kJ/mol";
  std::string output;
};
int cmd_gen_system(const GlobalFlags& flags, const GenSystemArgs& args);

struct InitParamsArgs {
  std::string output;
};
int cmd_init_params(const GlobalFlags& flags, const InitParamsArgs& args);

std::string output_path(const RunConfig& cfg, const std::string& name);

}  // namespace flashcg::cli
