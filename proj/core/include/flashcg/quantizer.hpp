#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flashcg/model.hpp"
#include "flashcg/synthetic.hpp"

namespace flashcg {

// Representative inputs of one layer: count x width, row-major.
struct CalibrationSet {
  int width = 0;
  std::vector<float> samples;

  int count() const { return width > 0 ? static_cast<int>(samples.size() / width) : 0; }
  std::span<const float> sample(int s) const {
    return {samples.data() + static_cast<std::size_t>(s) * width, static_cast<std::size_t>(width)};
  }
};

enum class ScaleMode { per_channel, per_tensor };

inline constexpr int kScaleGridPoints = 33;  // geometric over [1/8, 8] x seed

// Dequantized weight exactly as stored: scale * fp16 value, in fp32.
float dequantize(std::uint16_t half_bits, float scale) noexcept;

// Output error sum_s sum_k ((w_q[k] - w[k]) . x_s)^2 of replacing `original`
// weights with `quantized` ones on the calibration set.
double calibration_error(const Linear& original, const Linear& quantized,
                         const CalibrationSet& calib);

// fp16 weights with one scale per output channel (or one shared scale),
// chosen on the grid to minimize calibration output error. Ties go to the
// smaller scale. Zero rows get scale 1 and zero weights.
Linear quantize_layer(const Linear& layer, const CalibrationSet& calib,
                      ScaleMode mode = ScaleMode::per_channel);

// W16A16 forward: inputs of every quantized layer are rounded to fp16,
// products are accumulated in fp32, output stays fp32.
std::vector<float> quantized_mlp_forward(const Mlp& mlp, std::span<const float> input);

struct LayerQuantReport {
  std::string name;
  int in_dim = 0;
  int out_dim = 0;
  double per_channel_error = 0.0;
  double per_tensor_error = 0.0;
};

struct QuantizeOptions {
  int samples = 256;         // calibration rows per layer
  int states = 4;            // random systems used for node-feature calibration
  int beads = 64;
  std::uint64_t seed = 0;
  std::vector<System> calibration_states;  // used instead of generated ones when non-empty
};

// Every linear layer (pre-linear, filter, post, readout) becomes fp16 with
// per-channel scales. Embedding and biases stay fp32. Layers that are already
// quantized are kept unchanged.
ModelParams quantize_model(const ModelParams& params, const QuantizeOptions& options,
                           std::vector<LayerQuantReport>* report = nullptr);

}  // namespace flashcg
