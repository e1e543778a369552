#pragma once

#include <span>

#include "flashcg/neighbor.hpp"
#include "flashcg/traffic.hpp"
#include "flashcg/types.hpp"

namespace flashcg {

// Segments longer than this are reduced in fixed chunks whose partial sums
// are combined in chunk order, so results do not depend on the worker count.
inline constexpr Index kSegmentChunk = 8192;

// h_i = sum_{p = ptr[i]}^{ptr[i+1]-1} values[p]; `values` rows are already in
// perm order. Each output row is owned by one worker and written once.
template <class T>
Matrix<T> segment_reduce(const Matrix<T>& values, std::span<const Index> ptr,
                         int workers = 1);

// Same reduction with rows indexed by edge id and visited through layout.perm.
template <class T>
Matrix<T> segment_reduce(const Matrix<T>& values_by_edge, const CsrLayout& layout,
                         int workers = 1);

// out[index[e]] += values[e] in edge order; counts one atomic update per
// element when `traffic` is given.
template <class T>
Matrix<T> scatter_add(const Matrix<T>& values_by_edge, std::span<const Index> index,
                      Index num_nodes, TrafficReport* traffic = nullptr);

}  // namespace flashcg
