#include "flashcg/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "flashcg/aggregation.hpp"
#include "flashcg/evaluation.hpp"
#include "flashcg/half.hpp"
#include "flashcg/reference.hpp"

namespace flashcg {

float dequantize(std::uint16_t half_bits, float scale) noexcept {
  return scale * half_bits_to_float(half_bits);
}

namespace {

// Gram matrix C = sum_s x_s x_s^T, so a row error is delta^T C delta.
std::vector<double> gram(const CalibrationSet& calib) {
  const int n = calib.width;
  std::vector<double> C(static_cast<std::size_t>(n) * n, 0.0);
  for (int s = 0; s < calib.count(); ++s) {
    const auto x = calib.sample(s);
    for (int a = 0; a < n; ++a) {
      const double xa = x[a];
      if (xa == 0.0) continue;
      double* row = C.data() + static_cast<std::size_t>(a) * n;
      for (int b = 0; b < n; ++b) row[b] += xa * x[b];
    }
  }
  return C;
}

double row_error(std::span<const double> delta, const std::vector<double>& C) {
  const std::size_t n = delta.size();
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (delta[a] == 0.0) continue;
    const double* row = C.data() + a * n;
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) acc += row[b] * delta[b];
    total += delta[a] * acc;
  }
  return total;
}

float pow2_seed(float absmax) {
  if (!(absmax > 0.0f)) return 1.0f;
  return std::exp2(std::round(std::log2(absmax)));
}

std::vector<float> grid(float seed) {
  std::vector<float> out;
  for (int i = 0; i < kScaleGridPoints; ++i)
    out.push_back(seed * static_cast<float>(std::exp2(3.0 * (i - 16) / 16.0)));
  return out;
}

struct RowQuant {
  std::vector<std::uint16_t> half;
  std::vector<double> delta;
};

RowQuant quantize_row(std::span<const float> w, float scale) {
  RowQuant q;
  q.half.resize(w.size());
  q.delta.resize(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    q.half[k] = float_to_half_bits(w[k] / scale);
    q.delta[k] = static_cast<double>(dequantize(q.half[k], scale)) - static_cast<double>(w[k]);
  }
  return q;
}

void check_calibration(const Linear& layer, const CalibrationSet& calib) {
  if (calib.width != layer.in_dim)
    throw ConfigError("calibration width " + std::to_string(calib.width) +
                      " does not match layer input " + std::to_string(layer.in_dim));
  if (calib.count() < 1) throw ConfigError("calibration set is empty");
}

std::span<const float> weight_row(const Linear& l, int o) {
  return {l.weight.data() + static_cast<std::size_t>(o) * l.in_dim,
          static_cast<std::size_t>(l.in_dim)};
}

}  // namespace

double calibration_error(const Linear& original, const Linear& quantized,
                         const CalibrationSet& calib) {
  check_calibration(original, calib);
  if (quantized.in_dim != original.in_dim || quantized.out_dim != original.out_dim)
    throw ConfigError("calibration_error: layer shapes differ");
  const auto C = gram(calib);
  double total = 0.0;
  std::vector<double> delta(static_cast<std::size_t>(original.in_dim));
  for (int o = 0; o < original.out_dim; ++o) {
    const auto a = weight_row(quantized, o);
    const auto b = weight_row(original, o);
    for (int k = 0; k < original.in_dim; ++k)
      delta[k] = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    total += row_error(delta, C);
  }
  return total;
}

Linear quantize_layer(const Linear& layer, const CalibrationSet& calib, ScaleMode mode) {
  check_calibration(layer, calib);
  const auto C = gram(calib);
  const int O = layer.out_dim;
  const int I = layer.in_dim;

  std::vector<float> row_absmax(static_cast<std::size_t>(O), 0.0f);
  float tensor_absmax = 0.0f;
  for (int o = 0; o < O; ++o) {
    for (float v : weight_row(layer, o)) row_absmax[o] = std::max(row_absmax[o], std::abs(v));
    tensor_absmax = std::max(tensor_absmax, row_absmax[o]);
  }
  const auto tensor_grid = grid(pow2_seed(tensor_absmax));

  Linear q = layer;
  q.precision = Precision::fp16_scaled;
  q.half_weight.assign(static_cast<std::size_t>(O) * I, 0);
  q.scale.assign(static_cast<std::size_t>(O), 1.0f);

  std::vector<float> chosen(static_cast<std::size_t>(O), 1.0f);
  if (mode == ScaleMode::per_tensor) {
    float best_scale = 1.0f;
    double best = INFINITY;
    for (float s : tensor_grid) {
      double total = 0.0;
      for (int o = 0; o < O; ++o)
        if (row_absmax[o] > 0.0f) total += row_error(quantize_row(weight_row(layer, o), s).delta, C);
      if (total < best) {  // grid is ascending: ties keep the smaller scale
        best = total;
        best_scale = s;
      }
    }
    for (int o = 0; o < O; ++o)
      if (row_absmax[o] > 0.0f) chosen[o] = best_scale;
  } else {
    for (int o = 0; o < O; ++o) {
      if (!(row_absmax[o] > 0.0f)) continue;
      auto candidates = grid(pow2_seed(row_absmax[o]));
      candidates.insert(candidates.end(), tensor_grid.begin(), tensor_grid.end());
      std::sort(candidates.begin(), candidates.end());
      double best = INFINITY;
      for (float s : candidates) {
        const double e = row_error(quantize_row(weight_row(layer, o), s).delta, C);
        if (e < best) {
          best = e;
          chosen[o] = s;
        }
      }
    }
  }

  for (int o = 0; o < O; ++o) {
    const auto row = weight_row(layer, o);
    float* w = q.weight.data() + static_cast<std::size_t>(o) * I;
    std::uint16_t* h = q.half_weight.data() + static_cast<std::size_t>(o) * I;
    q.scale[o] = chosen[o];
    if (!(row_absmax[o] > 0.0f)) {
      std::fill(w, w + I, 0.0f);
      continue;
    }
    const auto rq = quantize_row(row, chosen[o]);
    for (int k = 0; k < I; ++k) {
      h[k] = rq.half[k];
      w[k] = dequantize(h[k], chosen[o]);
    }
  }
  return q;
}

std::vector<float> quantized_mlp_forward(const Mlp& mlp, std::span<const float> input) {
  const MlpT<float> m = MlpT<float>::from(mlp);
  return mlp_forward<float>(m, input).output;
}

namespace {

void append_rows(CalibrationSet& set, const Matrix<double>& m) {
  set.width = m.cols;
  for (double v : m.data) set.samples.push_back(static_cast<float>(v));
}

Matrix<double> activate(const Matrix<double>& m) {
  Matrix<double> out(m.rows, m.cols);
  for (std::size_t k = 0; k < m.data.size(); ++k) out.data[k] = shifted_softplus(m.data[k]);
  return out;
}

// Keeps `samples` evenly spaced rows.
void subsample(CalibrationSet& set, int samples) {
  const int n = set.count();
  if (n <= samples) return;
  std::vector<float> kept;
  kept.reserve(static_cast<std::size_t>(samples) * set.width);
  for (int s = 0; s < samples; ++s) {
    const auto row = set.sample(static_cast<int>(static_cast<std::int64_t>(s) * n / samples));
    kept.insert(kept.end(), row.begin(), row.end());
  }
  set.samples = std::move(kept);
}

std::map<std::string, CalibrationSet> collect_calibration(const ModelParams& params,
                                                          const QuantizeOptions& options) {
  const Model<double> model = Model<double>::from_params(params);
  std::map<std::string, CalibrationSet> sets;
  std::mt19937_64 rng(options.seed);

  // Filter layers: basis vectors at uniformly random distances.
  Matrix<double> basis(options.samples, model.rbf_dim());
  for (int s = 0; s < options.samples; ++s) {
    const double u = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double d = std::min(u, 1.0 - 0x1.0p-53) * params.config.cutoff;
    rbf_expand<double>(d, model.rbf, basis.row_span(s));
  }
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const auto& filter = model.blocks[b].filter;
    Matrix<double> x = basis;
    for (std::size_t l = 0; l < filter.layers.size(); ++l) {
      append_rows(sets[p + "filter" + std::to_string(l)], x);
      Matrix<double> y;
      dense_rows(filter.layers[l], x, y);
      x = activate(y);
    }
  }

  // Node-wise layers: features from forward passes on calibration states.
  std::vector<System> states = options.calibration_states;
  if (states.empty()) {
    for (int s = 0; s < options.states; ++s) {
      GeneratorOptions g;
      g.shape = SystemShape::globule;
      g.beads = options.beads;
      g.num_types = params.config.num_atom_types;
      g.seed = options.seed + 1000 + static_cast<std::uint64_t>(s);
      states.push_back(generate_system(g));
    }
  }
  for (const auto& state : states) {
    const NeighborList nl = build_neighbors_cells(state.positions, params.config.cutoff);
    const auto geometry = compute_edge_geometry(state.positions, nl);
    Matrix<double> X = embed(model, state.types);
    TrafficReport unused;
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      append_rows(sets[p + "pre"], X);
      ReferenceBlockCache<double> cache;
      Matrix<double> next = interaction_block<double>(model.blocks[b], model.rbf, X, geometry, nl,
                                                      {}, &cache, unused);
      append_rows(sets[p + "post0"], scatter_add(cache.messages, nl.dst, X.rows));
      append_rows(sets[p + "post1"], activate(cache.post.pre[0]));
      X = std::move(next);
    }
    append_rows(sets["readout0"], X);
    Matrix<double> h;
    dense_rows(model.readout.layers[0], X, h);
    append_rows(sets["readout1"], activate(h));
  }
  for (auto& [name, set] : sets) subsample(set, options.samples);
  return sets;
}

}  // namespace

ModelParams quantize_model(const ModelParams& params, const QuantizeOptions& options,
                           std::vector<LayerQuantReport>* report) {
  params.validate();
  if (options.samples < 1) throw ConfigError("quantize: samples must be >= 1");
  const auto sets = collect_calibration(params, options);
  ModelParams out = params;
  if (report) report->clear();
  for_each_linear(out, [&](const std::string& name, Linear& layer) {
    if (layer.quantized()) return;
    const CalibrationSet& calib = sets.at(name);
    const Linear original = layer;
    Linear per_channel = quantize_layer(original, calib, ScaleMode::per_channel);
    if (report) {
      const Linear per_tensor = quantize_layer(original, calib, ScaleMode::per_tensor);
      report->push_back({name, original.in_dim, original.out_dim,
                         calibration_error(original, per_channel, calib),
                         calibration_error(original, per_tensor, calib)});
    }
    layer = std::move(per_channel);
  });
  return out;
}

}  // namespace flashcg
