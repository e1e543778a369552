#include "flashcg/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "flashcg/half.hpp"

namespace flashcg {

void ModelConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("model: hidden_dim must be >= 1");
  if (rbf_dim < 1) throw ConfigError("model: rbf_dim must be >= 1");
  if (num_blocks < 1) throw ConfigError("model: num_blocks must be >= 1");
  if (num_atom_types < 1) throw ConfigError("model: num_atom_types must be >= 1");
  if (filter_hidden_dim < 1) throw ConfigError("model: filter_hidden_dim must be >= 1");
  if (readout_hidden_dim < 1)
    throw ConfigError("model: readout_hidden_dim must be >= 1");
  if (!(cutoff > 0.0) || !std::isfinite(cutoff))
    throw ConfigError("model: cutoff must be a positive finite length");
}

template <class T>
RbfSpec<T> RbfSpec<T>::uniform(int dim, double cutoff) {
  if (dim < 1 || !(cutoff > 0.0)) throw ConfigError("rbf: invalid dimension or cutoff");
  RbfSpec spec;
  spec.cutoff = static_cast<T>(cutoff);
  spec.centers.resize(static_cast<std::size_t>(dim));
  // A single center sits at 0 with the full cutoff as its width.
  const double spacing = dim > 1 ? cutoff / (dim - 1) : cutoff;
  for (int k = 0; k < dim; ++k) spec.centers[k] = static_cast<T>(k * spacing);
  if (dim > 1) spec.centers.back() = static_cast<T>(cutoff);
  spec.gamma = static_cast<T>(1.0 / (2.0 * spacing * spacing));
  return spec;
}

// Gaussians far from their center underflow, and their products with weights
// land in the subnormal range where every multiply takes a slow path. Basis
// values below sqrt(min normal) (1e-19 in fp32) are flushed to zero.
template <class T>
inline T basis_floor() {
  static const T floor = std::sqrt(std::numeric_limits<T>::min());
  return floor;
}

template <class T>
inline T flush_small(T x) {
  return std::abs(x) < basis_floor<T>() ? T(0) : x;
}

template <class T>
inline T gaussian(T gamma, T diff) {
  static const T limit = -std::log(basis_floor<T>());
  const T arg = gamma * diff * diff;
  return arg > limit ? T(0) : std::exp(-arg);
}

template <class T>
void rbf_expand(T d, const RbfSpec<T>& spec, std::span<T> out) {
  const T envelope = cosine_envelope(d, spec.cutoff);
  if (envelope == T(0)) {
    std::fill(out.begin(), out.end(), T(0));
    return;
  }
  for (std::size_t k = 0; k < spec.centers.size(); ++k) {
    const T diff = d - spec.centers[k];
    out[k] = flush_small(gaussian(spec.gamma, diff) * envelope);
  }
}

template <class T>
void rbf_grad(T d, const RbfSpec<T>& spec, std::span<T> out) {
  if (d >= spec.cutoff) {
    std::fill(out.begin(), out.end(), T(0));
    return;
  }
  const T envelope = cosine_envelope(d, spec.cutoff);
  const T envelope_grad = cosine_envelope_grad(d, spec.cutoff);
  for (std::size_t k = 0; k < spec.centers.size(); ++k) {
    const T diff = d - spec.centers[k];
    const T gauss = gaussian(spec.gamma, diff);
    out[k] = flush_small(gauss * (envelope_grad - T(2) * spec.gamma * diff * envelope));
  }
}

// ---------------------------------------------------------------------------

bool ModelParams::quantized() const {
  bool any = false;
  for_each_linear(*this, [&](const std::string&, const Linear& l) {
    any = any || l.quantized();
  });
  return any;
}

namespace {

void check_linear(const std::string& name, const Linear& l, int in, int out) {
  if (l.in_dim != in || l.out_dim != out ||
      l.weight.size() != static_cast<std::size_t>(in) * out ||
      l.bias.size() != static_cast<std::size_t>(out)) {
    throw ConfigError("tensor '" + name + "' has shape inconsistent with config (expected " +
                      std::to_string(out) + "x" + std::to_string(in) + ")");
  }
  if (l.quantized() && (l.half_weight.size() != l.weight.size() ||
                        l.scale.size() != static_cast<std::size_t>(out))) {
    throw ConfigError("tensor '" + name + "' has inconsistent fp16 storage");
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(l.weight.begin(), l.weight.end(), finite) ||
      !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
    throw ConfigError("tensor '" + name + "' contains non-finite values");
  }
}

}  // namespace

void ModelParams::validate() const {
  config.validate();
  const int D = config.hidden_dim;
  if (embedding.size() != static_cast<std::size_t>(config.num_atom_types) * D)
    throw ConfigError("tensor 'embedding' has shape inconsistent with config");
  if (blocks.size() != static_cast<std::size_t>(config.num_blocks))
    throw ConfigError("block count does not match num_blocks");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    check_linear(p + "pre", block.pre, D, D);
    if (block.filter.layers.size() != 2 || block.post.layers.size() != 2)
      throw ConfigError(p + " must have two filter and two post layers");
    check_linear(p + "filter0", block.filter.layers[0], config.rbf_dim,
                 config.filter_hidden_dim);
    check_linear(p + "filter1", block.filter.layers[1], config.filter_hidden_dim, D);
    check_linear(p + "post0", block.post.layers[0], D, D);
    check_linear(p + "post1", block.post.layers[1], D, D);
  }
  if (readout.layers.size() != 2) throw ConfigError("readout must have two layers");
  check_linear("readout0", readout.layers[0], D, config.readout_hidden_dim);
  check_linear("readout1", readout.layers[1], config.readout_hidden_dim, 1);
}

namespace {

class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
  // Uniform in [-a, a) from the top 53 bits, independent of library distributions.
  float symmetric(double a) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return static_cast<float>((2.0 * u - 1.0) * a);
  }

 private:
  std::mt19937_64 engine_;
};

Linear random_linear(UniformSource& rng, int in, int out) {
  Linear l(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : l.weight) w = rng.symmetric(bound);
  for (auto& b : l.bias) b = rng.symmetric(bound);
  return l;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  UniformSource rng(seed);
  ModelParams params;
  params.config = config;
  const int D = config.hidden_dim;
  params.embedding.resize(static_cast<std::size_t>(config.num_atom_types) * D);
  for (auto& v : params.embedding) v = rng.symmetric(std::sqrt(3.0));
  for (int b = 0; b < config.num_blocks; ++b) {
    BlockParams block;
    block.pre = random_linear(rng, D, D);
    block.filter.layers.push_back(random_linear(rng, config.rbf_dim, config.filter_hidden_dim));
    block.filter.layers.push_back(random_linear(rng, config.filter_hidden_dim, D));
    block.post.layers.push_back(random_linear(rng, D, D));
    block.post.layers.push_back(random_linear(rng, D, D));
    params.blocks.push_back(std::move(block));
  }
  params.readout.layers.push_back(random_linear(rng, D, config.readout_hidden_dim));
  params.readout.layers.push_back(random_linear(rng, config.readout_hidden_dim, 1));
  return params;
}

// ---------------------------------------------------------------------------

template <class T>
DenseLayer<T> DenseLayer<T>::from(const Linear& linear) {
  DenseLayer layer;
  layer.in_dim = linear.in_dim;
  layer.out_dim = linear.out_dim;
  layer.weight.assign(linear.weight.begin(), linear.weight.end());
  layer.bias.assign(linear.bias.begin(), linear.bias.end());
  layer.half_input = linear.quantized();
  return layer;
}

template <class T>
MlpT<T> MlpT<T>::from(const Mlp& mlp) {
  MlpT out;
  for (const auto& l : mlp.layers) out.layers.push_back(DenseLayer<T>::from(l));
  return out;
}

template <class T>
void dense_forward(const DenseLayer<T>& layer, std::span<const T> x, std::span<T> y) {
  const int in = layer.in_dim;
  if (static_cast<int>(x.size()) != in || static_cast<int>(y.size()) != layer.out_dim)
    throw ConfigError("dense_forward: shape mismatch");
  const T* xin = x.data();
  std::vector<T> rounded;
  if (layer.half_input) {
    rounded.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) rounded[k] = round_to_half_t(x[k]);
    xin = rounded.data();
  }
  for (int o = 0; o < layer.out_dim; ++o) {
    const T* w = layer.weight.data() + static_cast<std::size_t>(o) * in;
    T acc = layer.bias[o];
    for (int k = 0; k < in; ++k) acc += w[k] * xin[k];
    y[o] = acc;
  }
}

template <class T>
void dense_backward_input(const DenseLayer<T>& layer, std::span<const T> gy,
                          std::span<T> gx) {
  const int in = layer.in_dim;
  if (static_cast<int>(gx.size()) != in || static_cast<int>(gy.size()) != layer.out_dim)
    throw ConfigError("dense_backward_input: shape mismatch");
  std::fill(gx.begin(), gx.end(), T(0));
  for (int o = 0; o < layer.out_dim; ++o) {
    const T* w = layer.weight.data() + static_cast<std::size_t>(o) * in;
    const T g = gy[o];
    for (int k = 0; k < in; ++k) gx[k] += w[k] * g;
  }
}

template <class T>
MlpForwardResult<T> mlp_forward(const MlpT<T>& mlp, std::span<const T> input) {
  if (mlp.layers.empty()) throw ConfigError("mlp_forward: empty MLP");
  if (static_cast<int>(input.size()) != mlp.in_dim())
    throw ConfigError("mlp_forward: input width " + std::to_string(input.size()) +
                      " does not match first layer width " +
                      std::to_string(mlp.in_dim()));
  MlpForwardResult<T> result;
  result.cache.mlp = &mlp;
  std::vector<T> current(input.begin(), input.end());
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    std::vector<T> next(static_cast<std::size_t>(layer.out_dim));
    dense_forward<T>(layer, current, next);
    if (l + 1 < mlp.layers.size()) {
      result.cache.pre_activations.push_back(next);
      for (auto& v : next) v = shifted_softplus(v);
    }
    current = std::move(next);
  }
  result.output = std::move(current);
  return result;
}

template <class T>
std::vector<T> mlp_backward_input(const MlpT<T>& mlp, const MlpCache<T>& cache,
                                  std::span<const T> grad_out) {
  if (cache.mlp != &mlp || cache.pre_activations.size() + 1 != mlp.layers.size())
    throw ContractViolation("mlp_backward_input: cache does not belong to this MLP");
  if (static_cast<int>(grad_out.size()) != mlp.out_dim())
    throw ContractViolation("mlp_backward_input: grad_out width mismatch");
  std::vector<T> grad(grad_out.begin(), grad_out.end());
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const auto& layer = mlp.layers[l];
    std::vector<T> gin(static_cast<std::size_t>(layer.in_dim));
    dense_backward_input<T>(layer, grad, gin);
    if (l > 0) {
      const auto& pre = cache.pre_activations[l - 1];
      if (pre.size() != gin.size())
        throw ContractViolation("mlp_backward_input: stale cache");
      for (std::size_t k = 0; k < gin.size(); ++k) gin[k] *= shifted_softplus_grad(pre[k]);
    }
    grad = std::move(gin);
  }
  return grad;
}

template <class T>
Model<T> Model<T>::from_params(const ModelParams& params) {
  params.validate();
  Model model;
  model.config = params.config;
  model.rbf = RbfSpec<T>::uniform(params.config.rbf_dim, params.config.cutoff);
  model.embedding.assign(params.embedding.begin(), params.embedding.end());
  for (const auto& b : params.blocks) {
    model.blocks.push_back(
        {DenseLayer<T>::from(b.pre), MlpT<T>::from(b.filter), MlpT<T>::from(b.post)});
  }
  model.readout = MlpT<T>::from(params.readout);
  model.quantized = params.quantized();
  return model;
}

#define FLASHCG_INSTANTIATE(T)                                                        \
  template struct RbfSpec<T>;                                                         \
  template void rbf_expand<T>(T, const RbfSpec<T>&, std::span<T>);                    \
  template void rbf_grad<T>(T, const RbfSpec<T>&, std::span<T>);                      \
  template struct DenseLayer<T>;                                                      \
  template struct MlpT<T>;                                                            \
  template void dense_forward<T>(const DenseLayer<T>&, std::span<const T>, std::span<T>); \
  template void dense_backward_input<T>(const DenseLayer<T>&, std::span<const T>,     \
                                        std::span<T>);                                \
  template MlpForwardResult<T> mlp_forward<T>(const MlpT<T>&, std::span<const T>);    \
  template std::vector<T> mlp_backward_input<T>(const MlpT<T>&, const MlpCache<T>&,   \
                                                std::span<const T>);                  \
  template struct Model<T>;

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
