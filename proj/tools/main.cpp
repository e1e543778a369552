#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "flashcg/types.hpp"

namespace {

std::optional<bool> on_off(const std::string& v) {
  if (v.empty()) return std::nullopt;
  if (v == "on") return true;
  if (v == "off") return false;
  throw flashcg::ConfigError("expected on or off, got '" + v + "'");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace flashcg::cli;
  CLI::App app{"flashcg: coarse-grained MD with a fused, segment-reduced graph network potential"};
  app.require_subcommand(1);

  GlobalFlags flags;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string mode, fused, segred, quant, out;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed")->group("Global");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber)->group("Global");
  app.add_option("--config", flags.config, "Run configuration file")->check(CLI::ExistingFile)->group("Global");
  app.add_option("--mode", mode, "Precision")->check(CLI::IsMember({"32bit", "64bit"}))->group("Global");
  app.add_option("--fused", fused, "Fused edge operator")->check(CLI::IsMember({"on", "off"}))->group("Global");
  app.add_option("--segred", segred, "Segmented reductions")->check(CLI::IsMember({"on", "off"}))->group("Global");
  app.add_option("--quant", quant, "W16A16 MLPs")->check(CLI::IsMember({"on", "off"}))->group("Global");
  app.add_option("--out", out, "Output directory")->group("Global");
  app.add_flag("--inject-fault", flags.inject_fault)->group("");  // test hook

  auto* simulate = app.add_subcommand("simulate", "Run Langevin dynamics");
  simulate->fallthrough();

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Run the oracle suite");
  verify->add_option("--checks", verify_args.checks, "Subset of checks")->delimiter(',');
  verify->fallthrough();

  auto* bench = app.add_subcommand("bench", "Benchmark backends; writes bench.csv");
  bench->fallthrough();

  QuantizeArgs quantize_args;
  auto* quantize = app.add_subcommand("quantize", "Quantize a parameter file to W16A16");
  quantize->add_option("input", quantize_args.input, "Full-precision parameters")->required()->check(CLI::ExistingFile);
  quantize->add_option("output", quantize_args.output, "Quantized parameters")->required();
  quantize->add_option("--states", quantize_args.states, "Random states for the energy check")->check(CLI::NonNegativeNumber);
  quantize->fallthrough();

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Structural metrics of a trajectory; writes metrics.csv");
  analyze->add_option("--trajectory", analyze_args.trajectory, "Trajectory (xyz)");
  analyze->add_option("--system", analyze_args.system, "System file with the native reference");
  analyze->add_option("--metrics", analyze_args.metrics, "rmsd,q,gdt,graph")->delimiter(',');
  analyze->fallthrough();

  GenSystemArgs gen_args;
  auto* gen = app.add_subcommand("gen-system", "Generate a synthetic bead system");
  gen->add_option("--shape", gen_args.shape)->check(CLI::IsMember({"coil", "helix", "globule"}));
  gen->add_option("--beads", gen_args.beads)->check(CLI::Range(2, 1000000));
  gen->add_option("--energy-unit", gen_args.energy_unit)->check(CLI::IsMember({"kJ/mol", "kcal/mol"}));
  gen->add_option("-o,--output", gen_args.output, "System file (default <out>/system.txt)");
  gen->fallthrough();

  InitParamsArgs init_args;
  auto* init = app.add_subcommand("init-params", "Write randomly initialized model parameters");
  init->add_option("-o,--output", init_args.output, "Parameter file (default <out>/params.flcg)");
  init->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*seed_opt) flags.seed = seed;
    if (*workers_opt) flags.workers = workers;
    if (!mode.empty()) flags.mode = mode;
    if (!out.empty()) flags.out = out;
    flags.fused = on_off(fused);
    flags.segred = on_off(segred);
    flags.quant = on_off(quant);

    if (*simulate) return cmd_simulate(flags);
    if (*verify) return cmd_verify(flags, verify_args);
    if (*bench) return cmd_bench(flags);
    if (*quantize) return cmd_quantize(flags, quantize_args);
    if (*analyze) return cmd_analyze(flags, analyze_args);
    if (*gen) return cmd_gen_system(flags, gen_args);
    if (*init) return cmd_init_params(flags, init_args);
  } catch (const flashcg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
