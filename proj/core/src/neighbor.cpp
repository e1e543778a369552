#include "flashcg/neighbor.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace flashcg {

void canonicalize(NeighborList& nl) {
  const std::size_t E = nl.src.size();
  std::vector<std::size_t> order(E);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return nl.dst[a] != nl.dst[b] ? nl.dst[a] < nl.dst[b] : nl.src[a] < nl.src[b];
  });
  NeighborList sorted;
  sorted.src.resize(E);
  sorted.dst.resize(E);
  for (std::size_t p = 0; p < E; ++p) {
    sorted.src[p] = nl.src[order[p]];
    sorted.dst[p] = nl.dst[order[p]];
  }
  nl = std::move(sorted);
}

template <class T>
NeighborList build_neighbors_bruteforce(const Positions<T>& positions, T cutoff) {
  const auto n = static_cast<Index>(positions.size());
  const T cutoff2 = cutoff * cutoff;
  NeighborList nl;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (squared_distance(positions[i], positions[j]) < cutoff2) {
        nl.dst.push_back(i);
        nl.src.push_back(j);
      }
    }
  }
  return nl;
}

template <class T>
NeighborList build_neighbors_cells(const Positions<T>& positions, T cutoff) {
  const auto n = static_cast<Index>(positions.size());
  NeighborList nl;
  if (n == 0) return nl;

  Vec3<T> lo = positions[0];
  Vec3<T> hi = positions[0];
  for (const auto& r : positions)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], r[k]);
      hi[k] = std::max(hi[k], r[k]);
    }

  // Cell edge >= cutoff; grows until the grid has at most ~8 cells per bead so
  // sparse, far-flung configurations do not allocate huge grids.
  double cell = static_cast<double>(cutoff) * (1.0 + 1e-9);
  std::array<std::int64_t, 3> dims{};
  for (;;) {
    std::int64_t total = 1;
    for (int k = 0; k < 3; ++k) {
      const double extent = static_cast<double>(hi[k]) - static_cast<double>(lo[k]);
      dims[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(extent / cell) + 1);
      total *= dims[k];
    }
    if (total <= 8 * static_cast<std::int64_t>(n) + 27) break;
    cell *= 1.5;
  }

  auto cell_coord = [&](const Vec3<T>& r, int k) {
    const double rel = (static_cast<double>(r[k]) - static_cast<double>(lo[k])) / cell;
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(rel), 0, dims[k] - 1);
  };
  auto flat = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return static_cast<std::size_t>((x * dims[1] + y) * dims[2] + z);
  };

  // Bucket beads per cell (counting sort keeps bead order within a cell).
  const std::size_t num_cells = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  std::vector<std::size_t> bead_cell(static_cast<std::size_t>(n));
  std::vector<Index> cell_start(num_cells + 1, 0);
  for (Index i = 0; i < n; ++i) {
    bead_cell[i] = flat(cell_coord(positions[i], 0), cell_coord(positions[i], 1),
                        cell_coord(positions[i], 2));
    ++cell_start[bead_cell[i] + 1];
  }
  std::partial_sum(cell_start.begin(), cell_start.end(), cell_start.begin());
  std::vector<Index> cell_beads(static_cast<std::size_t>(n));
  {
    std::vector<Index> fill(cell_start.begin(), cell_start.end() - 1);
    for (Index i = 0; i < n; ++i) cell_beads[fill[bead_cell[i]]++] = i;
  }

  const T cutoff2 = cutoff * cutoff;
  std::vector<Index> found;
  for (Index i = 0; i < n; ++i) {
    found.clear();
    const auto cx = cell_coord(positions[i], 0);
    const auto cy = cell_coord(positions[i], 1);
    const auto cz = cell_coord(positions[i], 2);
    for (std::int64_t x = std::max<std::int64_t>(cx - 1, 0);
         x <= std::min(cx + 1, dims[0] - 1); ++x)
      for (std::int64_t y = std::max<std::int64_t>(cy - 1, 0);
           y <= std::min(cy + 1, dims[1] - 1); ++y)
        for (std::int64_t z = std::max<std::int64_t>(cz - 1, 0);
             z <= std::min(cz + 1, dims[2] - 1); ++z) {
          const auto c = flat(x, y, z);
          for (Index p = cell_start[c]; p < cell_start[c + 1]; ++p) {
            const Index j = cell_beads[p];
            if (j != i && squared_distance(positions[i], positions[j]) < cutoff2)
              found.push_back(j);
          }
        }
    std::sort(found.begin(), found.end());
    for (Index j : found) {
      nl.dst.push_back(i);
      nl.src.push_back(j);
    }
  }
  return nl;
}

namespace {

CsrLayout group_by(const std::vector<Index>& key, Index num_nodes, GroupKey kind) {
  CsrLayout layout;
  layout.key = kind;
  layout.ptr.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (Index k : key) {
    if (k < 0 || k >= num_nodes)
      throw ContractViolation("group_by: edge endpoint outside [0, N)");
    ++layout.ptr[k + 1];
  }
  std::partial_sum(layout.ptr.begin(), layout.ptr.end(), layout.ptr.begin());
  layout.perm.resize(key.size());
  std::vector<Index> fill(layout.ptr.begin(), layout.ptr.end() - 1);
  for (std::size_t e = 0; e < key.size(); ++e)
    layout.perm[fill[key[e]]++] = static_cast<Index>(e);
  return layout;
}

}  // namespace

CsrLayout group_by_destination(const NeighborList& nl, Index num_nodes) {
  return group_by(nl.dst, num_nodes, GroupKey::destination);
}

CsrLayout group_by_source(const NeighborList& nl, Index num_nodes) {
  return group_by(nl.src, num_nodes, GroupKey::source);
}

void check_layout(const CsrLayout& layout, const NeighborList& nl) {
  const auto& key = layout.key == GroupKey::destination ? nl.dst : nl.src;
  const auto E = static_cast<Index>(key.size());
  if (layout.ptr.empty() || layout.ptr.front() != 0 || layout.ptr.back() != E ||
      static_cast<Index>(layout.perm.size()) != E)
    throw ContractViolation("CSR layout does not match the neighbor list");
  for (Index i = 0; i + 1 < static_cast<Index>(layout.ptr.size()); ++i) {
    if (layout.ptr[i] > layout.ptr[i + 1])
      throw ContractViolation("CSR layout ptr is not monotone");
    for (Index p = layout.ptr[i]; p < layout.ptr[i + 1]; ++p) {
      const Index e = layout.perm[p];
      if (e < 0 || e >= E || key[e] != i)
        throw ContractViolation("CSR layout segment membership does not match the neighbor list");
    }
  }
}

template NeighborList build_neighbors_bruteforce<float>(const Positions<float>&, float);
template NeighborList build_neighbors_bruteforce<double>(const Positions<double>&, double);
template NeighborList build_neighbors_cells<float>(const Positions<float>&, float);
template NeighborList build_neighbors_cells<double>(const Positions<double>&, double);

}  // namespace flashcg
