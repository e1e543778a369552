#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "flashcg/types.hpp"

namespace flashcg {

struct ModelConfig {
  int hidden_dim = 128;          // D
  int rbf_dim = 64;              // D_r
  int num_blocks = 3;            // T
  double cutoff = 1.5;           // r_cut, nm
  int num_atom_types = 20;
  int filter_hidden_dim = 128;
  int readout_hidden_dim = 64;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Radial basis with cosine envelope
// ---------------------------------------------------------------------------

template <class T>
struct RbfSpec {
  std::vector<T> centers;  // nm, strictly increasing, first 0, last r_cut
  T gamma{};               // nm^-2
  T cutoff{};              // nm

  int dim() const { return static_cast<int>(centers.size()); }

  // D_r centers uniformly spaced on [0, r_cut], gamma = 1 / (2 spacing^2).
  static RbfSpec uniform(int dim, double cutoff);
};

template <class T>
inline T cosine_envelope(T d, T cutoff) {
  if (d >= cutoff) return T(0);
  return T(0.5) * (std::cos(std::numbers::pi_v<T> * d / cutoff) + T(1));
}

template <class T>
inline T cosine_envelope_grad(T d, T cutoff) {
  if (d >= cutoff) return T(0);
  return -T(0.5) * std::numbers::pi_v<T> / cutoff * std::sin(std::numbers::pi_v<T> * d / cutoff);
}

// out[k] = exp(-gamma (d - mu_k)^2) * C(d)
template <class T>
void rbf_expand(T d, const RbfSpec<T>& spec, std::span<T> out);

// out[k] = d/dd of rbf_expand(d)[k]
template <class T>
void rbf_grad(T d, const RbfSpec<T>& spec, std::span<T> out);

template <class T>
std::vector<T> rbf_expand(T d, const RbfSpec<T>& spec) {
  std::vector<T> out(spec.centers.size());
  rbf_expand<T>(d, spec, out);
  return out;
}

template <class T>
std::vector<T> rbf_grad(T d, const RbfSpec<T>& spec) {
  std::vector<T> out(spec.centers.size());
  rbf_grad<T>(d, spec, out);
  return out;
}

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

// ln(0.5 e^x + 0.5), evaluated as softplus(x) - ln 2 without overflow.
template <class T>
inline T shifted_softplus(T x) {
  const T softplus = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
  return softplus - std::numbers::ln2_v<T>;
}

// d/dx shifted_softplus = sigmoid(x)
template <class T>
inline T shifted_softplus_grad(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// ---------------------------------------------------------------------------
// Stored parameters (32-bit canonical form, optionally fp16 + per-channel scale)
// ---------------------------------------------------------------------------

enum class Precision : std::uint8_t { fp32 = 0, fp16_scaled = 1 };

struct Linear {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<float> weight;  // out x in, row-major; dequantized when fp16_scaled
  std::vector<float> bias;    // out
  Precision precision = Precision::fp32;
  std::vector<std::uint16_t> half_weight;  // fp16 bit patterns, fp16_scaled only
  std::vector<float> scale;                // per output channel, fp16_scaled only

  Linear() = default;
  Linear(int in, int out)
      : in_dim(in),
        out_dim(out),
        weight(static_cast<std::size_t>(in) * out, 0.0f),
        bias(static_cast<std::size_t>(out), 0.0f) {}

  bool quantized() const { return precision == Precision::fp16_scaled; }
};

// Affine layers with shifted softplus between consecutive layers.
struct Mlp {
  std::vector<Linear> layers;

  int in_dim() const { return layers.front().in_dim; }
  int out_dim() const { return layers.back().out_dim; }
};

struct BlockParams {
  Linear pre;   // D -> D, node-wise, applied before the gather
  Mlp filter;   // D_r -> filter_hidden -> D
  Mlp post;     // D -> D -> D, residual update
};

struct ModelParams {
  ModelConfig config;
  std::vector<float> embedding;  // num_atom_types x D
  std::vector<BlockParams> blocks;
  Mlp readout;  // D -> readout_hidden -> 1

  bool quantized() const;
  // Throws ConfigError naming the first tensor whose shape disagrees with config.
  void validate() const;
};

// Variance-scaled uniform init: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// embedding ~ U(-sqrt(3), sqrt(3)). Bit-identical for equal (config, seed).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Visits every linear layer with a stable name ("block0.filter1", "readout0", ...).
template <class Params, class Fn>
void for_each_linear(Params& params, Fn&& fn) {
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    auto& block = params.blocks[b];
    const std::string prefix = "block" + std::to_string(b) + ".";
    fn(prefix + "pre", block.pre);
    for (std::size_t l = 0; l < block.filter.layers.size(); ++l)
      fn(prefix + "filter" + std::to_string(l), block.filter.layers[l]);
    for (std::size_t l = 0; l < block.post.layers.size(); ++l)
      fn(prefix + "post" + std::to_string(l), block.post.layers[l]);
  }
  for (std::size_t l = 0; l < params.readout.layers.size(); ++l)
    fn("readout" + std::to_string(l), params.readout.layers[l]);
}

// ---------------------------------------------------------------------------
// Evaluation-precision layers
// ---------------------------------------------------------------------------

template <class T>
struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<T> weight;  // out x in
  std::vector<T> bias;
  bool half_input = false;  // round the input to fp16 before the product (W16A16)

  static DenseLayer from(const Linear& linear);
};

template <class T>
struct MlpT {
  std::vector<DenseLayer<T>> layers;

  int in_dim() const { return layers.front().in_dim; }
  int out_dim() const { return layers.back().out_dim; }
  static MlpT from(const Mlp& mlp);
};

// y = W x + b, accumulated in input order starting from the bias.
template <class T>
void dense_forward(const DenseLayer<T>& layer, std::span<const T> x, std::span<T> y);

// gx = W^T gy, accumulated in output order.
template <class T>
void dense_backward_input(const DenseLayer<T>& layer, std::span<const T> gy,
                          std::span<T> gx);

template <class T>
struct MlpCache {
  const MlpT<T>* mlp = nullptr;
  std::vector<std::vector<T>> pre_activations;  // one per hidden layer
};

template <class T>
struct MlpForwardResult {
  std::vector<T> output;
  MlpCache<T> cache;
};

template <class T>
MlpForwardResult<T> mlp_forward(const MlpT<T>& mlp, std::span<const T> input);

// d(grad_out . output)/d(input); throws ContractViolation on a foreign cache.
template <class T>
std::vector<T> mlp_backward_input(const MlpT<T>& mlp, const MlpCache<T>& cache,
                                  std::span<const T> grad_out);

// The model at evaluation precision T, built from stored parameters.
template <class T>
struct Model {
  struct Block {
    DenseLayer<T> pre;
    MlpT<T> filter;
    MlpT<T> post;
  };

  ModelConfig config;
  RbfSpec<T> rbf;
  std::vector<T> embedding;
  std::vector<Block> blocks;
  MlpT<T> readout;
  bool quantized = false;

  static Model from_params(const ModelParams& params);

  int hidden_dim() const { return config.hidden_dim; }
  int rbf_dim() const { return config.rbf_dim; }
};

}  // namespace flashcg
