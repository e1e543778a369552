#pragma once

#include "flashcg/evaluation.hpp"
#include "flashcg/kernels.hpp"

namespace flashcg {

// Per-block state kept for backward: node-level only. Edge tensors (B, W, M)
// are never stored; backward recomputes them from the cached distances.
template <class T>
struct FlashBlockCache {
  Matrix<T> xp;         // pre-linear output, N x D
  RowsMlpCache<T> post;  // post-MLP pre-activations, N x D
};

// d is shared by all blocks of a step: positions do not move inside one
// evaluation, so every block writes the same values.
template <class T>
struct FlashCaches {
  const Model<T>* model = nullptr;
  const NeighborList* nl = nullptr;
  const CsrLayout* dst = nullptr;
  const CsrLayout* src = nullptr;
  Buffer<T> distances;
  std::vector<FlashBlockCache<T>> blocks;
};

// One fused block: destination segments are streamed in edge tiles through
// geometry, basis, filter MLP and message, accumulated in a segment-local row,
// and written once per node. Then post-MLP and residual.
template <class T>
Matrix<T> flash_block_forward(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                              const Matrix<T>& X, const Positions<T>& positions,
                              const NeighborList& nl, const CsrLayout* dst_layout,
                              Buffer<T>& distances, FlashBlockCache<T>& cache,
                              const BackendOptions& options, TrafficReport& traffic);

// Backward of one block. Source segments recompute b and w per edge from the
// cached d, accumulate grad x_src in a segment-local row, and add dE/dd into
// grad_distance (one slot per edge, owned by the edge's source segment).
template <class T>
Matrix<T> flash_block_backward(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                               const FlashBlockCache<T>& cache, const Matrix<T>& grad_out,
                               const NeighborList& nl, const CsrLayout* src_layout,
                               const Buffer<T>& distances, Buffer<T>& grad_distance,
                               const BackendOptions& options, TrafficReport& traffic);

// Energy and forces through the fused pipeline. With segred off, edges are
// streamed in canonical order and accumulated by scatter-add instead.
template <class T>
EnergyForces<T> flash_evaluate(const Model<T>& model, const Positions<T>& positions,
                               std::span<const int> types, const NeighborList& nl,
                               const CsrLayout* dst_layout, const CsrLayout* src_layout,
                               const BackendOptions& options);

// Node boundaries that split the segments of `ptr` into `workers` ranges of
// roughly equal edge + node work, never splitting a segment.
std::vector<std::size_t> segment_bounds(std::span<const Index> ptr, int workers);

}  // namespace flashcg
