#include "flashcg/aggregation.hpp"

#include <algorithm>

#include "flashcg/parallel.hpp"

namespace flashcg {

namespace {

// A unit of reduction work: rows [begin, end) of one segment. Segments longer
// than kSegmentChunk produce several items whose partials are combined later.
struct WorkItem {
  Index segment;
  Index begin;
  Index end;
  Index partial;  // -1: write the output row directly
};

// Splits work items into contiguous worker ranges with roughly equal edge counts.
std::vector<std::size_t> balance(const std::vector<WorkItem>& items, Index total, int workers) {
  const std::size_t w = static_cast<std::size_t>(std::max(workers, 1));
  std::vector<std::size_t> bounds{0};
  std::int64_t seen = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    seen += items[i].end - items[i].begin;
    const std::int64_t target = static_cast<std::int64_t>(total) * bounds.size() / w;
    if (bounds.size() < w && seen >= target && i + 1 < items.size()) bounds.push_back(i + 1);
  }
  bounds.push_back(items.size());
  return bounds;
}

template <class T, class RowFn>
Matrix<T> reduce_segments(std::span<const Index> ptr, Index cols, int workers, RowFn&& row_of) {
  if (ptr.empty()) throw ContractViolation("segment_reduce: empty ptr array");
  const Index n = static_cast<Index>(ptr.size()) - 1;
  Matrix<T> out(n, cols);

  std::vector<WorkItem> items;
  items.reserve(static_cast<std::size_t>(n));
  Index partials = 0;
  std::vector<std::pair<Index, Index>> split;  // (segment, first partial)
  for (Index i = 0; i < n; ++i) {
    const Index b = ptr[i];
    const Index e = ptr[i + 1];
    if (e < b) throw ContractViolation("segment_reduce: ptr is not nondecreasing");
    if (e - b <= kSegmentChunk) {
      items.push_back({i, b, e, -1});
      continue;
    }
    split.emplace_back(i, partials);
    for (Index c = b; c < e; c += kSegmentChunk)
      items.push_back({i, c, std::min<Index>(c + kSegmentChunk, e), partials++});
  }
  Matrix<T> partial(partials, cols);

  const Index total = ptr[n] - ptr[0];
  run_partitioned(balance(items, total, workers), [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t it = begin; it < end; ++it) {
      const WorkItem& w = items[it];
      T* acc = w.partial < 0 ? out.row(w.segment) : partial.row(w.partial);
      for (Index p = w.begin; p < w.end; ++p) {
        const T* v = row_of(p);
        for (Index c = 0; c < cols; ++c) acc[c] += v[c];
      }
    }
  });

  for (const auto& [segment, first] : split) {
    const Index chunks = (ptr[segment + 1] - ptr[segment] + kSegmentChunk - 1) / kSegmentChunk;
    T* dst = out.row(segment);
    for (Index c = 0; c < chunks; ++c) {
      const T* p = partial.row(first + c);
      for (Index k = 0; k < cols; ++k) dst[k] += p[k];
    }
  }
  return out;
}

}  // namespace

template <class T>
Matrix<T> segment_reduce(const Matrix<T>& values, std::span<const Index> ptr, int workers) {
  if (!ptr.empty() && ptr.back() > values.rows)
    throw ContractViolation("segment_reduce: ptr exceeds the value stream");
  return reduce_segments<T>(ptr, values.cols, workers,
                            [&](Index p) { return values.row(p); });
}

template <class T>
Matrix<T> segment_reduce(const Matrix<T>& values_by_edge, const CsrLayout& layout,
                         int workers) {
  if (layout.perm.size() != static_cast<std::size_t>(values_by_edge.rows))
    throw ContractViolation("segment_reduce: layout does not match the value stream");
  return reduce_segments<T>(layout.ptr, values_by_edge.cols, workers,
                            [&](Index p) { return values_by_edge.row(layout.perm[p]); });
}

template <class T>
Matrix<T> scatter_add(const Matrix<T>& values_by_edge, std::span<const Index> index,
                      Index num_nodes, TrafficReport* traffic) {
  if (index.size() != static_cast<std::size_t>(values_by_edge.rows))
    throw ContractViolation("scatter_add: index and values disagree in length");
  const Index D = values_by_edge.cols;
  Matrix<T> out(num_nodes, D);
  for (Index e = 0; e < values_by_edge.rows; ++e) {
    const Index i = index[e];
    if (i < 0 || i >= num_nodes) throw ContractViolation("scatter_add: index out of range");
    T* dst = out.row(i);
    const T* v = values_by_edge.row(e);
    for (Index c = 0; c < D; ++c) dst[c] += v[c];
  }
  if (traffic) traffic->atomic_updates += static_cast<std::int64_t>(values_by_edge.rows) * D;
  return out;
}

#define FLASHCG_INSTANTIATE(T)                                                              \
  template Matrix<T> segment_reduce<T>(const Matrix<T>&, std::span<const Index>, int);      \
  template Matrix<T> segment_reduce<T>(const Matrix<T>&, const CsrLayout&, int);            \
  template Matrix<T> scatter_add<T>(const Matrix<T>&, std::span<const Index>, Index,        \
                                    TrafficReport*);

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
