#include "flashcg/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "flashcg/half.hpp"

namespace flashcg {

namespace {

constexpr int kOutBlock = 4;

#if defined(__AVX512F__)
constexpr int kVecBytes = 64;
#elif defined(__AVX__)
constexpr int kVecBytes = 32;
#else
constexpr int kVecBytes = 16;
#endif

template <class T>
struct Lanes;
template <>
struct Lanes<float> {
  typedef float type __attribute__((vector_size(kVecBytes)));
};
template <>
struct Lanes<double> {
  typedef double type __attribute__((vector_size(kVecBytes)));
};

template <class T>
using Vec = typename Lanes<T>::type;
template <class T>
constexpr int kLanes = kVecBytes / static_cast<int>(sizeof(T));

template <class T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <class T>
inline void store(T* p, const Vec<T>& v) {
  std::memcpy(p, &v, sizeof(v));
}

// Register block: kOutBlock rows of the result times two vectors of items.
// Every element is accumulated in the same k (or o) order as the row primitive.
template <class T>
void forward_block(const T* W, const T* b, const T* in, T* out, int I, int o, int t, int ld) {
  constexpr int L = kLanes<T>;
  Vec<T> acc[kOutBlock][2];
  for (int r = 0; r < kOutBlock; ++r) acc[r][0] = acc[r][1] = Vec<T>{} + b[o + r];
  const T* w0 = W + static_cast<std::size_t>(o) * I;
  for (int k = 0; k < I; ++k) {
    const T* a = in + static_cast<std::size_t>(k) * ld + t;
    const Vec<T> a0 = load(a);
    const Vec<T> a1 = load(a + L);
    for (int r = 0; r < kOutBlock; ++r) {
      const Vec<T> w = Vec<T>{} + w0[static_cast<std::size_t>(r) * I + k];
      acc[r][0] += w * a0;
      acc[r][1] += w * a1;
    }
  }
  for (int r = 0; r < kOutBlock; ++r) {
    T* dst = out + static_cast<std::size_t>(o + r) * ld + t;
    store(dst, acc[r][0]);
    store(dst + L, acc[r][1]);
  }
}

template <class T>
void backward_block(const T* W, const T* gout, T* gin, int I, int O, int k, int t, int ld) {
  constexpr int L = kLanes<T>;
  Vec<T> acc[kOutBlock][2] = {};
  for (int o = 0; o < O; ++o) {
    const T* g = gout + static_cast<std::size_t>(o) * ld + t;
    const Vec<T> g0 = load(g);
    const Vec<T> g1 = load(g + L);
    const T* w = W + static_cast<std::size_t>(o) * I + k;
    for (int r = 0; r < kOutBlock; ++r) {
      const Vec<T> wv = Vec<T>{} + w[r];
      acc[r][0] += wv * g0;
      acc[r][1] += wv * g1;
    }
  }
  for (int r = 0; r < kOutBlock; ++r) {
    T* dst = gin + static_cast<std::size_t>(k + r) * ld + t;
    store(dst, acc[r][0]);
    store(dst + L, acc[r][1]);
  }
}

}  // namespace

template <class T>
void round_tile_to_half(T* buf, int rows, int n, int ld) {
  for (int k = 0; k < rows; ++k) {
    T* row = buf + static_cast<std::size_t>(k) * ld;
    for (int t = 0; t < n; ++t) row[t] = round_to_half_t(row[t]);
  }
}

template <class T>
void dense_forward_tile(const DenseLayer<T>& layer, T* in, T* out, int n, int ld) {
  const int I = layer.in_dim;
  const int O = layer.out_dim;
  const T* W = layer.weight.data();
  const T* b = layer.bias.data();
  if (layer.half_input) round_tile_to_half(in, I, n, ld);
  constexpr int kItems = 2 * kLanes<T>;
  const int n_vec = n - n % kItems;

  int o = 0;
  for (; o + kOutBlock <= O; o += kOutBlock)
    for (int t = 0; t < n_vec; t += kItems) forward_block(W, b, in, out, I, o, t, ld);
  for (int oo = 0; oo < O; ++oo) {
    const bool blocked = oo < o;
    const T* w = W + static_cast<std::size_t>(oo) * I;
    T* dst = out + static_cast<std::size_t>(oo) * ld;
    for (int t = blocked ? n_vec : 0; t < n; ++t) {
      T acc = b[oo];
      for (int k = 0; k < I; ++k) acc += w[k] * in[static_cast<std::size_t>(k) * ld + t];
      dst[t] = acc;
    }
  }
}

template <class T>
void dense_backward_tile(const DenseLayer<T>& layer, const T* gout, T* gin, int n, int ld) {
  const int I = layer.in_dim;
  const int O = layer.out_dim;
  const T* W = layer.weight.data();
  constexpr int kItems = 2 * kLanes<T>;
  const int n_vec = n - n % kItems;

  int k = 0;
  for (; k + kOutBlock <= I; k += kOutBlock)
    for (int t = 0; t < n_vec; t += kItems) backward_block(W, gout, gin, I, O, k, t, ld);
  for (int kk = 0; kk < I; ++kk) {
    const bool blocked = kk < k;
    T* dst = gin + static_cast<std::size_t>(kk) * ld;
    for (int t = blocked ? n_vec : 0; t < n; ++t) {
      T acc = T(0);
      for (int o = 0; o < O; ++o)
        acc += W[static_cast<std::size_t>(o) * I + kk] * gout[static_cast<std::size_t>(o) * ld + t];
      dst[t] = acc;
    }
  }
}

template <class T>
void dense_rows_tiled(const DenseLayer<T>& layer, const Matrix<T>& in, Matrix<T>& out,
                      int tile) {
  const Index rows = in.rows;
  out = Matrix<T>(rows, layer.out_dim);
  Buffer<T> a(static_cast<std::size_t>(layer.in_dim) * tile);
  Buffer<T> y(static_cast<std::size_t>(layer.out_dim) * tile);
  for (Index r0 = 0; r0 < rows; r0 += tile) {
    const int n = static_cast<int>(std::min<Index>(tile, rows - r0));
    for (int t = 0; t < n; ++t) {
      const T* src = in.row(r0 + t);
      for (int k = 0; k < layer.in_dim; ++k) a[static_cast<std::size_t>(k) * tile + t] = src[k];
    }
    dense_forward_tile(layer, a.data(), y.data(), n, tile);
    for (int t = 0; t < n; ++t) {
      T* dst = out.row(r0 + t);
      for (int o = 0; o < layer.out_dim; ++o) dst[o] = y[static_cast<std::size_t>(o) * tile + t];
    }
  }
}

template <class T>
void dense_rows_backward_tiled(const DenseLayer<T>& layer, const Matrix<T>& gout,
                               Matrix<T>& gin, int tile) {
  const Index rows = gout.rows;
  gin = Matrix<T>(rows, layer.in_dim);
  Buffer<T> g(static_cast<std::size_t>(layer.out_dim) * tile);
  Buffer<T> x(static_cast<std::size_t>(layer.in_dim) * tile);
  for (Index r0 = 0; r0 < rows; r0 += tile) {
    const int n = static_cast<int>(std::min<Index>(tile, rows - r0));
    for (int t = 0; t < n; ++t) {
      const T* src = gout.row(r0 + t);
      for (int o = 0; o < layer.out_dim; ++o) g[static_cast<std::size_t>(o) * tile + t] = src[o];
    }
    dense_backward_tile(layer, g.data(), x.data(), n, tile);
    for (int t = 0; t < n; ++t) {
      T* dst = gin.row(r0 + t);
      for (int k = 0; k < layer.in_dim; ++k) dst[k] = x[static_cast<std::size_t>(k) * tile + t];
    }
  }
}

template <class T>
void dense_rows(const DenseLayer<T>& layer, const Matrix<T>& in, Matrix<T>& out) {
  out = Matrix<T>(in.rows, layer.out_dim);
  for (Index i = 0; i < in.rows; ++i)
    dense_forward<T>(layer, in.row_span(i), out.row_span(i));
}

template <class T>
void dense_rows_backward(const DenseLayer<T>& layer, const Matrix<T>& gout,
                         Matrix<T>& gin) {
  gin = Matrix<T>(gout.rows, layer.in_dim);
  for (Index i = 0; i < gout.rows; ++i)
    dense_backward_input<T>(layer, gout.row_span(i), gin.row_span(i));
}

template <class T>
Matrix<T> mlp_rows_forward(const MlpT<T>& mlp, const Matrix<T>& in, int tile,
                           RowsMlpCache<T>* cache, TrafficReport* traffic, Stage stage,
                           int width) {
  if (mlp.layers.empty() || in.cols != mlp.in_dim())
    throw ConfigError("mlp: input width does not match the first layer");
  const std::int64_t rows = in.rows;
  if (cache) {
    cache->pre.clear();
    cache->act.clear();
  }
  Matrix<T> out;
  Matrix<T> act;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    const Matrix<T>& x = l == 0 ? in : act;
    if (tile > 0)
      dense_rows_tiled(layer, x, out, tile);
    else
      dense_rows(layer, x, out);
    if (traffic) {
      traffic->read(stage, rows * layer.in_dim, width);
      traffic->write(stage, rows * layer.out_dim, width);
    }
    if (l + 1 == mlp.layers.size()) break;
    Matrix<T> next(out.rows, out.cols);
    for (std::size_t k = 0; k < out.data.size(); ++k) next.data[k] = shifted_softplus(out.data[k]);
    if (traffic) {
      traffic->read(stage, rows * layer.out_dim, width);
      traffic->write(stage, rows * layer.out_dim, width);
    }
    if (cache) {
      cache->pre.push_back(std::move(out));
      if (cache->keep_activations && l > 0) cache->act.push_back(std::move(act));
    }
    act = std::move(next);
  }
  if (cache && cache->keep_activations && mlp.layers.size() > 1) cache->act.push_back(std::move(act));
  return out;
}

template <class T>
Matrix<T> mlp_rows_backward(const MlpT<T>& mlp, const RowsMlpCache<T>& cache,
                            const Matrix<T>& grad_out, int tile, TrafficReport* traffic,
                            Stage stage, int width) {
  if (cache.pre.size() + 1 != mlp.layers.size())
    throw ContractViolation("mlp backward: cache does not belong to this network");
  const std::int64_t rows = grad_out.rows;
  Matrix<T> g;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const auto& layer = mlp.layers[l];
    const Matrix<T>& gy = l + 1 == mlp.layers.size() ? grad_out : g;
    Matrix<T> gx;
    if (tile > 0)
      dense_rows_backward_tiled(layer, gy, gx, tile);
    else
      dense_rows_backward(layer, gy, gx);
    if (traffic) {
      traffic->read(stage, rows * layer.out_dim, width);
      traffic->write(stage, rows * layer.in_dim, width);
    }
    if (l > 0) {
      const Matrix<T>& pre = cache.pre[l - 1];
      if (pre.rows != gx.rows || pre.cols != gx.cols)
        throw ContractViolation("mlp backward: cache shape mismatch");
      for (std::size_t k = 0; k < gx.data.size(); ++k)
        gx.data[k] *= shifted_softplus_grad(pre.data[k]);
      if (traffic) {
        traffic->read(stage, 2 * rows * layer.in_dim, width);
        traffic->write(stage, rows * layer.in_dim, width);
      }
    }
    g = std::move(gx);
  }
  return g;
}

#define FLASHCG_INSTANTIATE(T)                                                          \
  template void round_tile_to_half<T>(T*, int, int, int);                               \
  template void dense_forward_tile<T>(const DenseLayer<T>&, T*, T*, int, int);          \
  template void dense_backward_tile<T>(const DenseLayer<T>&, const T*, T*, int, int);   \
  template void dense_rows_tiled<T>(const DenseLayer<T>&, const Matrix<T>&, Matrix<T>&, \
                                    int);                                               \
  template void dense_rows_backward_tiled<T>(const DenseLayer<T>&, const Matrix<T>&,    \
                                             Matrix<T>&, int);                          \
  template void dense_rows<T>(const DenseLayer<T>&, const Matrix<T>&, Matrix<T>&);      \
  template void dense_rows_backward<T>(const DenseLayer<T>&, const Matrix<T>&, Matrix<T>&); \
  template Matrix<T> mlp_rows_forward<T>(const MlpT<T>&, const Matrix<T>&, int,          \
                                         RowsMlpCache<T>*, TrafficReport*, Stage, int);  \
  template Matrix<T> mlp_rows_backward<T>(const MlpT<T>&, const RowsMlpCache<T>&,        \
                                          const Matrix<T>&, int, TrafficReport*, Stage, int);

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
