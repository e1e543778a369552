#pragma once

#include <vector>

#include "flashcg/types.hpp"

namespace flashcg {

// Directed cutoff graph; both orientations of every pair are present and the
// edges are in canonical (dst, src) lexicographic order.
struct NeighborList {
  std::vector<Index> src;
  std::vector<Index> dst;

  Index num_edges() const { return static_cast<Index>(src.size()); }
  bool operator==(const NeighborList&) const = default;
};

enum class GroupKey { destination, source };

// Edges grouped by a key node: edges of node i are perm[ptr[i] .. ptr[i+1]).
struct CsrLayout {
  GroupKey key = GroupKey::destination;
  std::vector<Index> ptr;
  std::vector<Index> perm;

  Index num_nodes() const { return static_cast<Index>(ptr.size()) - 1; }
  Index segment_size(Index i) const { return ptr[i + 1] - ptr[i]; }
  bool operator==(const CsrLayout&) const = default;
};

// Squared distance with the exact expression shared by every builder, so the
// strict cutoff test is bit-identical across them.
template <class T>
inline T squared_distance(const Vec3<T>& a, const Vec3<T>& b) {
  const T dx = a[0] - b[0];
  const T dy = a[1] - b[1];
  const T dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// O(N^2) enumeration of all ordered pairs with |r_i - r_j| < r_cut.
template <class T>
NeighborList build_neighbors_bruteforce(const Positions<T>& positions, T cutoff);

// Uniform cell grid over the bounding box (cell edge >= r_cut); same edge set
// and order as the brute-force builder.
template <class T>
NeighborList build_neighbors_cells(const Positions<T>& positions, T cutoff);

// Stable counting sort of edge ids by dst (or src). O(E + N).
CsrLayout group_by_destination(const NeighborList& nl, Index num_nodes);
CsrLayout group_by_source(const NeighborList& nl, Index num_nodes);

// Checks the CSR invariants against `nl`; throws ContractViolation otherwise.
void check_layout(const CsrLayout& layout, const NeighborList& nl);

// Sorts edges into canonical (dst, src) order.
void canonicalize(NeighborList& nl);

}  // namespace flashcg
