#pragma once

#include "flashcg/model.hpp"
#include "flashcg/traffic.hpp"

namespace flashcg {

// Feature-major tiles: element (feature k, item t) lives at buf[k * ld + t],
// t < n <= ld. The tile kernels accumulate every output element in the same
// order as dense_forward / dense_backward_input, so results are bit-equal to
// the per-vector primitives.

// out = W in + b. `in` is rounded to fp16 in place first when the layer
// carries W16A16 activations.
template <class T>
void dense_forward_tile(const DenseLayer<T>& layer, T* in, T* out, int n, int ld);

// gin = W^T gout.
template <class T>
void dense_backward_tile(const DenseLayer<T>& layer, const T* gout, T* gin, int n, int ld);

template <class T>
void round_tile_to_half(T* buf, int rows, int n, int ld);

// Row-major matrix -> row-major matrix through one dense layer, processed in
// node tiles of `tile` rows.
template <class T>
void dense_rows_tiled(const DenseLayer<T>& layer, const Matrix<T>& in, Matrix<T>& out,
                      int tile);

// Row-major gradient through one dense layer (input gradient only).
template <class T>
void dense_rows_backward_tiled(const DenseLayer<T>& layer, const Matrix<T>& gout,
                               Matrix<T>& gin, int tile);

// Row-by-row reference counterparts (per-vector primitive on every row).
template <class T>
void dense_rows(const DenseLayer<T>& layer, const Matrix<T>& in, Matrix<T>& out);

template <class T>
void dense_rows_backward(const DenseLayer<T>& layer, const Matrix<T>& gout,
                         Matrix<T>& gin);

// Pre-activations (and optionally post-activation inputs) of the hidden
// layers of a row-wise MLP evaluation.
template <class T>
struct RowsMlpCache {
  std::vector<Matrix<T>> pre;
  std::vector<Matrix<T>> act;  // filled only when keep_activations is set
  bool keep_activations = false;
};

// Applies an MLP to every row. `tile` > 0 selects the tiled kernels, 0 the
// per-row primitive. Each layer is counted as one read of its input and one
// write of its output under `stage`; each activation as one read and one write.
template <class T>
Matrix<T> mlp_rows_forward(const MlpT<T>& mlp, const Matrix<T>& in, int tile,
                           RowsMlpCache<T>* cache, TrafficReport* traffic, Stage stage,
                           int width);

// Input gradient of mlp_rows_forward. The activation derivative step reads the
// gradient and the cached pre-activation (two reads, one write).
template <class T>
Matrix<T> mlp_rows_backward(const MlpT<T>& mlp, const RowsMlpCache<T>& cache,
                            const Matrix<T>& grad_out, int tile, TrafficReport* traffic,
                            Stage stage, int width);

}  // namespace flashcg
