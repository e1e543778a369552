#include "flashcg/run_config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace flashcg {

namespace {

using Handler = std::function<void(const TextEntry&)>;

void apply_section(const TextDocument& doc, const std::string& name,
                   const std::map<std::string, Handler>& handlers) {
  const TextSection* s = doc.find(name);
  if (!s) return;
  if (!s->rows.empty()) fail_at(doc, s->rows.front().line, "[" + name + "] takes key = value lines only");
  for (const auto& e : s->entries) {
    auto it = handlers.find(e.key);
    if (it == handlers.end()) fail_at(doc, e.line, "unknown key '" + e.key + "' in [" + name + "]");
    it->second(e);
  }
}

std::vector<int> parse_int_list(const TextDocument& doc, const TextEntry& e) {
  std::vector<int> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    TextEntry sub{e.key, item, e.line};
    out.push_back(static_cast<int>(parse_int(doc, sub)));
  }
  if (out.empty()) fail_at(doc, e.line, "key '" + e.key + "' needs at least one value");
  return out;
}

}  // namespace

std::string run_mode_name(RunMode mode) { return mode == RunMode::fp64 ? "64bit" : "32bit"; }

RunMode parse_run_mode(const std::string& text) {
  if (text == "32bit") return RunMode::fp32;
  if (text == "64bit") return RunMode::fp64;
  throw ConfigError("mode must be 32bit or 64bit, got '" + text + "'");
}

RunConfig parse_run_config(const TextDocument& doc) {
  doc.reject_unknown({"run", "model", "sim", "backend", "files", "verify", "bench", "analysis"});
  if (const auto* top = doc.find(""); top)
    fail_at(doc, top->line, "settings must appear inside a [section]");
  RunConfig c;
  c.source = doc.source;
  auto i = [&](auto& field) {
    return [&doc, &field](const TextEntry& e) { field = static_cast<std::decay_t<decltype(field)>>(parse_int(doc, e)); };
  };
  auto d = [&](double& field) { return [&doc, &field](const TextEntry& e) { field = parse_double(doc, e); }; };
  auto b = [&](bool& field) { return [&doc, &field](const TextEntry& e) { field = parse_bool(doc, e); }; };
  auto s = [](std::string& field) { return [&field](const TextEntry& e) { field = e.value; }; };

  apply_section(doc, "run", {
      {"seed", i(c.seed)},
      {"workers", i(c.workers)},
      {"out", s(c.out_dir)},
      {"mode", [&](const TextEntry& e) {
         try {
           c.mode = parse_run_mode(e.value);
         } catch (const ConfigError& err) {
           fail_at(doc, e.line, err.what());
         }
       }},
  });
  apply_section(doc, "model", {
      {"hidden_dim", i(c.model.hidden_dim)},
      {"rbf_dim", i(c.model.rbf_dim)},
      {"num_blocks", i(c.model.num_blocks)},
      {"cutoff", d(c.model.cutoff)},
      {"num_atom_types", i(c.model.num_atom_types)},
      {"filter_hidden_dim", i(c.model.filter_hidden_dim)},
      {"readout_hidden_dim", i(c.model.readout_hidden_dim)},
  });
  apply_section(doc, "sim", {
      {"dt_fs", d(c.sim.dt_fs)},
      {"temperature", d(c.sim.temperature)},
      {"friction", d(c.sim.friction)},
      {"n_steps", i(c.sim.n_steps)},
      {"replicas", i(c.sim.replicas)},
      {"first_replica", i(c.sim.first_replica)},
      {"neighbor_stride", i(c.sim.neighbor_stride)},
      {"output_stride", i(c.sim.output_stride)},
      {"model_forces", b(c.sim.model_forces)},
      {"prior_forces", b(c.sim.prior_forces)},
      {"thermalize", b(c.sim.thermalize)},
      {"blowup_force", d(c.sim.blowup_force)},
      {"checkpoint_step", i(c.checkpoint_step)},
  });
  apply_section(doc, "backend", {
      {"fused", b(c.sim.backend.fused)},
      {"segred", b(c.sim.backend.segred)},
      {"quant", b(c.sim.backend.quant)},
      {"tile_edges", i(c.sim.backend.tile_edges)},
  });
  apply_section(doc, "files", {
      {"system", s(c.system_path)},
      {"params", s(c.params_path)},
      {"resume", s(c.resume_path)},
      {"trajectory", s(c.trajectory_path)},
  });
  apply_section(doc, "verify", {
      {"systems", i(c.verify.systems)},
      {"fd_systems", i(c.verify.fd_systems)},
      {"aggregation_instances", i(c.verify.aggregation_instances)},
      {"neighbor_instances", i(c.verify.neighbor_instances)},
      {"quant_states", i(c.verify.quant_states)},
  });
  apply_section(doc, "bench", {
      {"replicas", [&](const TextEntry& e) { c.bench.replicas = parse_int_list(doc, e); }},
      {"beads", i(c.bench.beads)},
      {"edges_per_node", d(c.bench.edges_per_node)},
      {"steps", i(c.bench.steps)},
      {"warmup", i(c.bench.warmup)},
  });
  apply_section(doc, "analysis", {
      {"contact_cutoff", d(c.analysis.contact_cutoff)},
      {"min_separation", i(c.analysis.min_separation)},
      {"gdt", b(c.analysis.gdt)},
      {"graph_cutoff", d(c.analysis.graph_cutoff)},
  });
  return c;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text_file(path)); }

void RunConfig::finalize() {
  sim.seed = seed;
  sim.workers = workers;
  sim.backend.workers = workers;
  model.validate();
  sim.validate();
  if (sim.backend.tile_edges < 1) throw ConfigError("tile_edges must be >= 1");
  if (verify.systems < 1 || verify.fd_systems < 1 || verify.aggregation_instances < 1 ||
      verify.neighbor_instances < 1 || verify.quant_states < 1)
    throw ConfigError("verify instance counts must be >= 1");
  for (int r : bench.replicas)
    if (r < 1) throw ConfigError("bench replicas must be >= 1");
  if (bench.beads < 2 || bench.steps < 1 || bench.warmup < 0 || !(bench.edges_per_node > 0.0))
    throw ConfigError("bench settings out of range");
  if (!(analysis.contact_cutoff > 0.0) || analysis.min_separation < 1 || analysis.graph_cutoff < 0.0)
    throw ConfigError("analysis settings out of range");
}

void RunConfig::require_files(bool system, bool params) const {
  auto check = [](const std::string& what, const std::string& path) {
    if (path.empty()) throw ConfigError("no " + what + " file given");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + what + " file '" + path + "'");
  };
  if (system) check("system", system_path);
  if (params) check("params", params_path);
  if (!resume_path.empty()) check("checkpoint", resume_path);
}

}  // namespace flashcg
