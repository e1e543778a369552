#include "flashcg/flash.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "flashcg/memory.hpp"
#include "flashcg/parallel.hpp"

namespace flashcg {

std::vector<std::size_t> segment_bounds(std::span<const Index> ptr, int workers) {
  const std::size_t n = ptr.empty() ? 0 : ptr.size() - 1;
  const std::size_t w = static_cast<std::size_t>(std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1)));
  std::vector<std::size_t> bounds{0};
  if (n == 0) {
    bounds.push_back(0);
    return bounds;
  }
  const std::int64_t total = static_cast<std::int64_t>(ptr[n] - ptr[0]) + static_cast<std::int64_t>(n);
  for (std::size_t i = 0; i < n && bounds.size() < w; ++i) {
    const std::int64_t done = static_cast<std::int64_t>(ptr[i + 1] - ptr[0]) + static_cast<std::int64_t>(i + 1);
    const std::int64_t target = total * static_cast<std::int64_t>(bounds.size()) / static_cast<std::int64_t>(w);
    if (done >= target && i + 1 < n) bounds.push_back(i + 1);
  }
  bounds.push_back(n);
  return bounds;
}

namespace {

// Edge-tile scratch: feature-major buffers of `ld` columns.
template <class T>
struct Scratch {
  int ld;
  Buffer<T> basis;
  Buffer<T> basis_grad;
  std::vector<Buffer<T>> pre;  // filter hidden pre-activations
  std::vector<Buffer<T>> act;
  Buffer<T> filters;
  Buffer<T> grad_filters;
  Buffer<T> grad_a;
  Buffer<T> grad_b;
  Buffer<T> acc;
  std::vector<Index> edge;
  std::vector<T> row;

  Scratch(const MlpT<T>& filter, int rbf_dim, int D, int tile, bool backward) : ld(tile) {
    const auto sz = [&](int rows) { return static_cast<std::size_t>(rows) * tile; };
    basis.resize(sz(rbf_dim));
    for (std::size_t l = 0; l + 1 < filter.layers.size(); ++l) {
      pre.emplace_back(sz(filter.layers[l].out_dim));
      act.emplace_back(sz(filter.layers[l].out_dim));
    }
    filters.resize(sz(D));
    if (backward) {
      basis_grad.resize(sz(rbf_dim));
      int widest = rbf_dim;
      for (const auto& layer : filter.layers) widest = std::max({widest, layer.in_dim, layer.out_dim});
      grad_filters.resize(sz(D));
      grad_a.resize(sz(widest));
      grad_b.resize(sz(widest));
    }
    acc.assign(static_cast<std::size_t>(D), T(0));
    edge.resize(static_cast<std::size_t>(tile));
    row.resize(static_cast<std::size_t>(rbf_dim));
  }
};

// Filter MLP over a basis tile; writes the filters tile.
template <class T>
void filter_tile_forward(const MlpT<T>& mlp, Scratch<T>& s, int n) {
  const std::size_t L = mlp.layers.size();
  T* in = s.basis.data();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    dense_forward_tile(mlp.layers[l], in, s.pre[l].data(), n, s.ld);
    const int rows = mlp.layers[l].out_dim;
    for (int k = 0; k < rows; ++k) {
      const T* a = s.pre[l].data() + static_cast<std::size_t>(k) * s.ld;
      T* z = s.act[l].data() + static_cast<std::size_t>(k) * s.ld;
      for (int t = 0; t < n; ++t) z[t] = shifted_softplus(a[t]);
    }
    in = s.act[l].data();
  }
  dense_forward_tile(mlp.layers[L - 1], in, s.filters.data(), n, s.ld);
}

// grad_filters tile -> basis gradient tile (left in grad_b).
template <class T>
void filter_tile_backward(const MlpT<T>& mlp, Scratch<T>& s, int n) {
  const T* g = s.grad_filters.data();
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const auto& layer = mlp.layers[l];
    T* gin = (l % 2 == (mlp.layers.size() - 1) % 2) ? s.grad_b.data() : s.grad_a.data();
    dense_backward_tile(layer, g, gin, n, s.ld);
    if (l > 0) {
      for (int k = 0; k < layer.in_dim; ++k) {
        T* gk = gin + static_cast<std::size_t>(k) * s.ld;
        const T* a = s.pre[l - 1].data() + static_cast<std::size_t>(k) * s.ld;
        for (int t = 0; t < n; ++t) gk[t] *= shifted_softplus_grad(a[t]);
      }
    }
    g = gin;
  }
  if (g != s.grad_b.data()) std::copy(g, g + s.grad_b.size(), s.grad_b.data());
}

template <class T>
void negate_row0(Buffer<T>& tile, int n) {
  for (int t = 0; t < n; ++t) tile[t] = -tile[t];
}

template <class T>
void load_basis(const RbfSpec<T>& rbf, T d, Scratch<T>& s, int t, bool with_grad) {
  const int R = rbf.dim();
  rbf_expand<T>(d, rbf, s.row);
  for (int k = 0; k < R; ++k) s.basis[static_cast<std::size_t>(k) * s.ld + t] = s.row[k];
  if (!with_grad) return;
  rbf_grad<T>(d, rbf, s.row);
  for (int k = 0; k < R; ++k) s.basis_grad[static_cast<std::size_t>(k) * s.ld + t] = s.row[k];
}

// Streams `order` (edge ids). Segmented: consecutive edges share a destination
// and the running segment row is written once when the destination changes;
// node rows [n0, n1) are owned by this call. Otherwise adds into H per edge.
template <class T>
void forward_stream(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                    const Matrix<T>& xp, const Positions<T>& positions, const NeighborList& nl,
                    std::span<const Index> order, bool segmented, Index n0, Index n1,
                    Matrix<T>& H, Buffer<T>& distances, const BackendOptions& options) {
  const Index D = xp.cols;
  const int tile = options.tile_edges;
  Scratch<T> s(block.filter, rbf.dim(), D, tile, false);
  Index cur = n0;
  auto flush = [&] {
    std::copy(s.acc.begin(), s.acc.end(), H.row(cur));
    std::fill(s.acc.begin(), s.acc.end(), T(0));
    ++cur;
  };
  for (std::size_t p0 = 0; p0 < order.size(); p0 += static_cast<std::size_t>(tile)) {
    const int n = static_cast<int>(std::min<std::size_t>(tile, order.size() - p0));
    for (int t = 0; t < n; ++t) {
      const Index e = order[p0 + t];
      s.edge[t] = e;
      const T d = norm(positions[nl.dst[e]] - positions[nl.src[e]]);
      distances[e] = d;
      load_basis(rbf, d, s, t, false);
    }
    filter_tile_forward(block.filter, s, n);
    if (options.fault == FaultInjection::flip_filter_sign) negate_row0(s.filters, n);
    for (int t = 0; t < n; ++t) {
      const Index e = s.edge[t];
      const Index i = nl.dst[e];
      const T* x = xp.row(nl.src[e]);
      const T* w = s.filters.data() + t;
      if (segmented) {
        while (cur < i) flush();
        T* acc = s.acc.data();
        for (Index c = 0; c < D; ++c) acc[c] += x[c] * w[static_cast<std::size_t>(c) * tile];
      } else {
        T* h = H.row(i);
        for (Index c = 0; c < D; ++c) h[c] += x[c] * w[static_cast<std::size_t>(c) * tile];
      }
    }
  }
  if (segmented)
    while (cur < n1) flush();
}

template <class T>
void backward_stream(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                     const Matrix<T>& xp, const Matrix<T>& gH, const NeighborList& nl,
                     std::span<const Index> order, bool segmented, Index n0, Index n1,
                     Matrix<T>& gXp, const Buffer<T>& distances, Buffer<T>& grad_distance,
                     const BackendOptions& options) {
  const Index D = xp.cols;
  const int R = rbf.dim();
  const int tile = options.tile_edges;
  Scratch<T> s(block.filter, R, D, tile, true);
  Index cur = n0;
  auto flush = [&] {
    std::copy(s.acc.begin(), s.acc.end(), gXp.row(cur));
    std::fill(s.acc.begin(), s.acc.end(), T(0));
    ++cur;
  };
  for (std::size_t p0 = 0; p0 < order.size(); p0 += static_cast<std::size_t>(tile)) {
    const int n = static_cast<int>(std::min<std::size_t>(tile, order.size() - p0));
    for (int t = 0; t < n; ++t) {
      const Index e = order[p0 + t];
      s.edge[t] = e;
      load_basis(rbf, distances[e], s, t, true);
    }
    filter_tile_forward(block.filter, s, n);
    if (options.fault == FaultInjection::flip_filter_sign) negate_row0(s.filters, n);
    for (int t = 0; t < n; ++t) {
      const Index e = s.edge[t];
      const Index j = nl.src[e];
      const T* g = gH.row(nl.dst[e]);
      const T* x = xp.row(j);
      const T* w = s.filters.data() + t;
      T* gw = s.grad_filters.data() + t;
      for (Index c = 0; c < D; ++c) gw[static_cast<std::size_t>(c) * tile] = g[c] * x[c];
      T* acc;
      if (segmented) {
        while (cur < j) flush();
        acc = s.acc.data();
      } else {
        acc = gXp.row(j);
      }
      for (Index c = 0; c < D; ++c) acc[c] += g[c] * w[static_cast<std::size_t>(c) * tile];
    }
    if (options.fault == FaultInjection::flip_filter_sign) negate_row0(s.grad_filters, n);
    filter_tile_backward(block.filter, s, n);
    for (int t = 0; t < n; ++t) {
      T sum = T(0);
      for (int k = 0; k < R; ++k)
        sum += s.grad_b[static_cast<std::size_t>(k) * tile + t] *
               s.basis_grad[static_cast<std::size_t>(k) * tile + t];
      grad_distance[s.edge[t]] += sum;
    }
  }
  if (segmented)
    while (cur < n1) flush();
}

void check_flash_inputs(const NeighborList& nl, const CsrLayout* layout, GroupKey key,
                        Index num_nodes, const BackendOptions& options) {
  if (options.tile_edges < 1) throw ConfigError("tile_edges must be >= 1");
  if (!options.segred) return;
  if (!layout) throw ContractViolation("segmented reduction needs a CSR layout");
  if (layout->key != key) throw ContractViolation("CSR layout is grouped by the wrong key");
  if (layout->num_nodes() != num_nodes || layout->perm.size() != nl.src.size() ||
      layout->ptr.back() != nl.num_edges())
    throw ContractViolation("CSR layout does not match the neighbor list");
}

std::vector<Index> identity_order(Index n) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  return order;
}

}  // namespace

template <class T>
Matrix<T> flash_block_forward(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                              const Matrix<T>& X, const Positions<T>& positions,
                              const NeighborList& nl, const CsrLayout* dst_layout,
                              Buffer<T>& distances, FlashBlockCache<T>& cache,
                              const BackendOptions& options, TrafficReport& traffic) {
  constexpr int w = sizeof(T);
  const Index N = X.rows;
  const Index D = X.cols;
  const Index E = nl.num_edges();
  const std::int64_t ND = std::int64_t{N} * D;
  check_flash_inputs(nl, dst_layout, GroupKey::destination, N, options);
  if (distances.size() != static_cast<std::size_t>(E)) distances.assign(static_cast<std::size_t>(E), T(0));

  dense_rows_tiled(block.pre, X, cache.xp, options.tile_edges);
  traffic.read(Stage::mlp, ND, w);
  traffic.write(Stage::mlp, ND, w);

  Matrix<T> H(N, D);
  if (options.segred) {
    const auto bounds = segment_bounds(dst_layout->ptr, options.workers);
    run_partitioned(bounds, [&](std::size_t n0, std::size_t n1, std::size_t) {
      const auto b = static_cast<std::size_t>(dst_layout->ptr[n0]);
      const auto e = static_cast<std::size_t>(dst_layout->ptr[n1]);
      forward_stream<T>(block, rbf, cache.xp, positions, nl,
                        std::span<const Index>(dst_layout->perm).subspan(b, e - b), true,
                        static_cast<Index>(n0), static_cast<Index>(n1), H, distances, options);
    });
  } else {
    const auto order = identity_order(E);
    forward_stream<T>(block, rbf, cache.xp, positions, nl, order, false, 0, N, H, distances,
                      options);
    traffic.atomic_updates += std::int64_t{E} * D;
  }
  traffic.read(Stage::geometry, 3 * std::int64_t{N} + 3 * std::int64_t{E}, w);
  traffic.write(Stage::geometry, E, w);
  traffic.read(Stage::gather, std::int64_t{E} * D, w);
  traffic.write(Stage::aggregation, ND, w);

  Matrix<T> Y = mlp_rows_forward(block.post, H, options.tile_edges, &cache.post, &traffic,
                                 Stage::mlp, w);
  H = {};
  for (std::size_t k = 0; k < Y.data.size(); ++k) Y.data[k] += X.data[k];
  traffic.read(Stage::mlp, 2 * ND, w);
  traffic.write(Stage::mlp, ND, w);
  return Y;
}

template <class T>
Matrix<T> flash_block_backward(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                               const FlashBlockCache<T>& cache, const Matrix<T>& grad_out,
                               const NeighborList& nl, const CsrLayout* src_layout,
                               const Buffer<T>& distances, Buffer<T>& grad_distance,
                               const BackendOptions& options, TrafficReport& traffic) {
  constexpr int w = sizeof(T);
  const Index N = grad_out.rows;
  const Index D = grad_out.cols;
  const Index E = nl.num_edges();
  const std::int64_t ND = std::int64_t{N} * D;
  check_flash_inputs(nl, src_layout, GroupKey::source, N, options);
  if (cache.xp.rows != N || distances.size() != static_cast<std::size_t>(E) ||
      grad_distance.size() != static_cast<std::size_t>(E))
    throw ContractViolation("flash backward: cache does not match this forward pass");

  Matrix<T> gH = mlp_rows_backward(block.post, cache.post, grad_out, options.tile_edges,
                                   &traffic, Stage::mlp, w);

  Matrix<T> gXp(N, D);
  if (options.segred) {
    const auto bounds = segment_bounds(src_layout->ptr, options.workers);
    run_partitioned(bounds, [&](std::size_t n0, std::size_t n1, std::size_t) {
      const auto b = static_cast<std::size_t>(src_layout->ptr[n0]);
      const auto e = static_cast<std::size_t>(src_layout->ptr[n1]);
      backward_stream<T>(block, rbf, cache.xp, gH, nl,
                         std::span<const Index>(src_layout->perm).subspan(b, e - b), true,
                         static_cast<Index>(n0), static_cast<Index>(n1), gXp, distances,
                         grad_distance, options);
    });
  } else {
    const auto order = identity_order(E);
    backward_stream<T>(block, rbf, cache.xp, gH, nl, order, false, 0, N, gXp, distances,
                       grad_distance, options);
    traffic.atomic_updates += std::int64_t{E} * D;
  }
  traffic.read(Stage::geometry, 2 * std::int64_t{E}, w);
  traffic.write(Stage::geometry, E, w);
  traffic.read(Stage::gather, std::int64_t{E} * D + ND, w);
  traffic.write(Stage::aggregation, ND, w);
  gH = {};

  Matrix<T> gX;
  dense_rows_backward_tiled(block.pre, gXp, gX, options.tile_edges);
  for (std::size_t k = 0; k < gX.data.size(); ++k) gX.data[k] += grad_out.data[k];
  traffic.read(Stage::mlp, 3 * ND, w);
  traffic.write(Stage::mlp, 2 * ND, w);
  return gX;
}

template <class T>
EnergyForces<T> flash_evaluate(const Model<T>& model, const Positions<T>& positions,
                               std::span<const int> types, const NeighborList& nl,
                               const CsrLayout* dst_layout, const CsrLayout* src_layout,
                               const BackendOptions& options) {
  check_types(types, positions.size(), model.config.num_atom_types);
  const Index N = static_cast<Index>(positions.size());
  const Index E = nl.num_edges();
  const int tile = options.tile_edges;

  EnergyForces<T> out;
  FlashCaches<T> caches;
  caches.model = &model;
  caches.nl = &nl;
  caches.dst = dst_layout;
  caches.src = src_layout;
  caches.distances.assign(static_cast<std::size_t>(E), T(0));
  caches.blocks.resize(model.blocks.size());

  Matrix<T> X = embed(model, types);
  for (std::size_t b = 0; b < model.blocks.size(); ++b)
    X = flash_block_forward<T>(model.blocks[b], model.rbf, X, positions, nl, dst_layout,
                               caches.distances, caches.blocks[b], options, out.traffic);

  RowsMlpCache<T> readout;
  Matrix<T> eps = mlp_rows_forward(model.readout, X, tile, &readout, nullptr, Stage::mlp, 0);
  X = {};
  out.atom_energies.resize(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) {
    out.atom_energies[i] = eps(i, 0);
    out.energy += eps(i, 0);
  }

  Matrix<T> ones(N, 1, T(1));
  Matrix<T> gX = mlp_rows_backward(model.readout, readout, ones, tile, nullptr, Stage::mlp, 0);
  readout = {};
  Buffer<T> grad_distance(static_cast<std::size_t>(E), T(0));
  for (std::size_t b = model.blocks.size(); b-- > 0;) {
    gX = flash_block_backward<T>(model.blocks[b], model.rbf, caches.blocks[b], gX, nl,
                                 src_layout, caches.distances, grad_distance, options,
                                 out.traffic);
    caches.blocks[b] = {};
  }
  gX = {};

  out.forces.assign(static_cast<std::size_t>(N), Vec3<T>{});
  const auto& d = caches.distances;
  if (options.segred) {
    // Each bead gathers its incoming and outgoing edges: no shared writes.
    parallel_for(static_cast<std::size_t>(N), options.workers,
                 [&](std::size_t n0, std::size_t n1, std::size_t) {
      for (std::size_t ii = n0; ii < n1; ++ii) {
        const auto i = static_cast<Index>(ii);
        Vec3<T> g{};
        for (Index p = dst_layout->ptr[i]; p < dst_layout->ptr[i + 1]; ++p) {
          const Index e = dst_layout->perm[p];
          if (d[e] < T(1e-12)) continue;
          const T s = grad_distance[e] / d[e];
          const Vec3<T> u = positions[i] - positions[nl.src[e]];
          for (int k = 0; k < 3; ++k) g[k] += s * u[k];
        }
        for (Index p = src_layout->ptr[i]; p < src_layout->ptr[i + 1]; ++p) {
          const Index e = src_layout->perm[p];
          if (d[e] < T(1e-12)) continue;
          const T s = grad_distance[e] / d[e];
          const Vec3<T> u = positions[nl.dst[e]] - positions[i];
          for (int k = 0; k < 3; ++k) g[k] -= s * u[k];
        }
        for (int k = 0; k < 3; ++k) out.forces[i][k] = -g[k];
      }
    });
  } else {
    Positions<T> grad(static_cast<std::size_t>(N), Vec3<T>{});
    for (Index e = 0; e < E; ++e) {
      if (d[e] < T(1e-12)) continue;
      const T s = grad_distance[e] / d[e];
      const Vec3<T> u = positions[nl.dst[e]] - positions[nl.src[e]];
      for (int k = 0; k < 3; ++k) {
        grad[nl.dst[e]][k] += s * u[k];
        grad[nl.src[e]][k] -= s * u[k];
      }
    }
    for (Index i = 0; i < N; ++i)
      for (int k = 0; k < 3; ++k) out.forces[i][k] = -grad[i][k];
  }
  return out;
}

#define FLASHCG_INSTANTIATE(T)                                                                \
  template Matrix<T> flash_block_forward<T>(const typename Model<T>::Block&,                  \
                                            const RbfSpec<T>&, const Matrix<T>&,              \
                                            const Positions<T>&, const NeighborList&,         \
                                            const CsrLayout*, Buffer<T>&,                     \
                                            FlashBlockCache<T>&, const BackendOptions&,       \
                                            TrafficReport&);                                  \
  template Matrix<T> flash_block_backward<T>(const typename Model<T>::Block&,                 \
                                             const RbfSpec<T>&, const FlashBlockCache<T>&,    \
                                             const Matrix<T>&, const NeighborList&,           \
                                             const CsrLayout*, const Buffer<T>&, Buffer<T>&,  \
                                             const BackendOptions&, TrafficReport&);          \
  template EnergyForces<T> flash_evaluate<T>(const Model<T>&, const Positions<T>&,            \
                                             std::span<const int>, const NeighborList&,       \
                                             const CsrLayout*, const CsrLayout*,              \
                                             const BackendOptions&);

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
