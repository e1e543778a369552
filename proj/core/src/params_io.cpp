#include "flashcg/params_io.hpp"

#include <map>

#include "flashcg/binary_io.hpp"
#include "flashcg/half.hpp"

namespace flashcg {

namespace {

void write_config(BinaryWriter& w, const ModelConfig& c) {
  w.u32(static_cast<std::uint32_t>(c.hidden_dim));
  w.u32(static_cast<std::uint32_t>(c.rbf_dim));
  w.u32(static_cast<std::uint32_t>(c.num_blocks));
  w.f64(c.cutoff);
  w.u32(static_cast<std::uint32_t>(c.num_atom_types));
  w.u32(static_cast<std::uint32_t>(c.filter_hidden_dim));
  w.u32(static_cast<std::uint32_t>(c.readout_hidden_dim));
}

ModelConfig read_config(BinaryReader& r) {
  ModelConfig c;
  c.hidden_dim = static_cast<int>(r.u32());
  c.rbf_dim = static_cast<int>(r.u32());
  c.num_blocks = static_cast<int>(r.u32());
  c.cutoff = r.f64();
  c.num_atom_types = static_cast<int>(r.u32());
  c.filter_hidden_dim = static_cast<int>(r.u32());
  c.readout_hidden_dim = static_cast<int>(r.u32());
  return c;
}

std::vector<TensorRecord> to_records(const ModelParams& params) {
  std::vector<TensorRecord> records;
  TensorRecord emb;
  emb.name = "embedding";
  emb.dims = {static_cast<std::uint32_t>(params.config.num_atom_types),
              static_cast<std::uint32_t>(params.config.hidden_dim)};
  emb.f32 = params.embedding;
  records.push_back(std::move(emb));
  for_each_linear(params, [&](const std::string& name, const Linear& l) {
    TensorRecord w;
    w.name = name + ".weight";
    w.dims = {static_cast<std::uint32_t>(l.out_dim), static_cast<std::uint32_t>(l.in_dim)};
    if (l.quantized()) {
      w.tag = TensorTag::fp16_scaled;
      w.f16 = l.half_weight;
      w.scale = l.scale;
    } else {
      w.f32 = l.weight;
    }
    records.push_back(std::move(w));
    TensorRecord b;
    b.name = name + ".bias";
    b.dims = {static_cast<std::uint32_t>(l.out_dim)};
    b.f32 = l.bias;
    records.push_back(std::move(b));
  });
  return records;
}

// Skeleton with correct shapes for `config`; used as the load target.
ModelParams skeleton(const ModelConfig& config) {
  ModelParams p;
  p.config = config;
  const int D = config.hidden_dim;
  p.embedding.assign(static_cast<std::size_t>(config.num_atom_types) * D, 0.0f);
  for (int b = 0; b < config.num_blocks; ++b) {
    BlockParams block;
    block.pre = Linear(D, D);
    block.filter.layers = {Linear(config.rbf_dim, config.filter_hidden_dim),
                           Linear(config.filter_hidden_dim, D)};
    block.post.layers = {Linear(D, D), Linear(D, D)};
    p.blocks.push_back(std::move(block));
  }
  p.readout.layers = {Linear(D, config.readout_hidden_dim),
                      Linear(config.readout_hidden_dim, 1)};
  return p;
}

const TensorRecord& take(std::map<std::string, TensorRecord>& tensors,
                         const std::string& name,
                         const std::vector<std::uint32_t>& dims) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ConfigError("parameter file is missing tensor '" + name + "'");
  if (it->second.dims != dims) {
    std::string shape;
    for (auto d : it->second.dims) shape += (shape.empty() ? "" : "x") + std::to_string(d);
    throw ConfigError("tensor '" + name + "' has shape " + shape +
                      " which does not match the model config");
  }
  return it->second;
}

}  // namespace

void save_params(const std::string& path, const ModelParams& params) {
  params.validate();
  BinaryWriter w(path);
  w.bytes(std::string(kParamsMagic, 4));
  w.u32(kParamsVersion);
  write_config(w, params.config);
  const auto records = to_records(params);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) write_tensor(w, r);
  w.close();
}

ModelParams load_params(const std::string& path,
                        const std::optional<ModelConfig>& expected) {
  BinaryReader r(path);
  if (r.bytes(4) != std::string(kParamsMagic, 4))
    throw ConfigError("'" + path + "' is not an FLCG parameter file");
  const auto version = r.u32();
  if (version != kParamsVersion)
    throw ConfigError("'" + path + "': unsupported format version " + std::to_string(version));
  const ModelConfig header = read_config(r);
  const ModelConfig config = expected.value_or(header);
  config.validate();

  const auto count = r.u32();
  std::map<std::string, TensorRecord> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto t = read_tensor(r);
    auto name = t.name;
    if (!tensors.emplace(name, std::move(t)).second)
      throw ConfigError("'" + path + "': duplicate tensor '" + name + "'");
  }
  if (!r.at_end()) throw ConfigError("'" + path + "': trailing bytes after tensors");

  ModelParams params = skeleton(config);
  const auto D = static_cast<std::uint32_t>(config.hidden_dim);
  params.embedding =
      take(tensors, "embedding", {static_cast<std::uint32_t>(config.num_atom_types), D}).f32;
  std::size_t consumed = 1;
  for_each_linear(params, [&](const std::string& name, Linear& l) {
    const auto& w = take(tensors, name + ".weight",
                         {static_cast<std::uint32_t>(l.out_dim),
                          static_cast<std::uint32_t>(l.in_dim)});
    if (w.tag == TensorTag::fp32) {
      l.weight = w.f32;
    } else if (w.tag == TensorTag::fp16_scaled) {
      l.precision = Precision::fp16_scaled;
      l.half_weight = w.f16;
      l.scale = w.scale;
      for (int o = 0; o < l.out_dim; ++o)
        for (int k = 0; k < l.in_dim; ++k) {
          const std::size_t idx = static_cast<std::size_t>(o) * l.in_dim + k;
          l.weight[idx] = l.scale[o] * half_bits_to_float(l.half_weight[idx]);
        }
    } else {
      throw ConfigError("tensor '" + name + ".weight' has unsupported precision tag");
    }
    const auto& b = take(tensors, name + ".bias", {static_cast<std::uint32_t>(l.out_dim)});
    if (b.tag != TensorTag::fp32)
      throw ConfigError("tensor '" + name + ".bias' must be fp32");
    l.bias = b.f32;
    consumed += 2;
  });
  if (consumed != tensors.size())
    throw ConfigError("'" + path + "' contains unexpected tensors");
  if (tensors.at("embedding").tag != TensorTag::fp32)
    throw ConfigError("tensor 'embedding' must be fp32");
  params.validate();
  return params;
}

}  // namespace flashcg
