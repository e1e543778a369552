#include "flashcg/reference.hpp"

#include "flashcg/aggregation.hpp"
#include "flashcg/evaluation.hpp"

namespace flashcg {

template <class T>
EdgeGeometry<T> compute_edge_geometry(const Positions<T>& positions, const NeighborList& nl) {
  const Index E = nl.num_edges();
  if (nl.dst.size() != nl.src.size()) throw ContractViolation("neighbor list arrays differ in length");
  EdgeGeometry<T> g;
  g.u.resize(static_cast<std::size_t>(E));
  g.d.resize(static_cast<std::size_t>(E));
  const auto n = static_cast<Index>(positions.size());
  for (Index e = 0; e < E; ++e) {
    const Index i = nl.dst[e];
    const Index j = nl.src[e];
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw ContractViolation("neighbor list refers to a bead outside the system");
    g.u[e] = positions[i] - positions[j];
    g.d[e] = norm(g.u[e]);
  }
  return g;
}

template <class T>
Matrix<T> cfconv_forward(const Matrix<T>& X, const Matrix<T>& W, const NeighborList& nl,
                         TrafficReport* traffic) {
  const Index E = nl.num_edges();
  if (W.rows != E || W.cols != X.cols) throw ContractViolation("cfconv: filter shape mismatch");
  Matrix<T> M(E, X.cols);
  for (Index e = 0; e < E; ++e) {
    const T* x = X.row(nl.src[e]);
    const T* w = W.row(e);
    T* m = M.row(e);
    for (Index c = 0; c < X.cols; ++c) m[c] = x[c] * w[c];
  }
  return scatter_add(M, nl.dst, X.rows, traffic);
}

namespace {

template <class T>
void check_layouts(const ReferenceLayouts& layouts, const NeighborList& nl) {
  if (layouts.aggregation != Aggregation::segmented) return;
  if (!layouts.dst || !layouts.src)
    throw ContractViolation("segmented aggregation needs destination and source layouts");
  if (layouts.dst->key != GroupKey::destination || layouts.src->key != GroupKey::source)
    throw ContractViolation("layouts are grouped by the wrong key");
  if (layouts.dst->perm.size() != nl.src.size() || layouts.src->perm.size() != nl.src.size())
    throw ContractViolation("layouts do not belong to this neighbor list");
}

}  // namespace

template <class T>
Matrix<T> interaction_block(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                            const Matrix<T>& X, const EdgeGeometry<T>& geometry,
                            const NeighborList& nl, const ReferenceLayouts& layouts,
                            ReferenceBlockCache<T>* cache, TrafficReport& traffic) {
  constexpr int w = sizeof(T);
  const Index N = X.rows;
  const Index D = X.cols;
  const Index E = nl.num_edges();
  const Index R = rbf.dim();
  const std::int64_t ND = std::int64_t{N} * D;
  const std::int64_t ED = std::int64_t{E} * D;
  check_layouts<T>(layouts, nl);

  ReferenceBlockCache<T> local;
  ReferenceBlockCache<T>& c = cache ? *cache : local;

  dense_rows(block.pre, X, c.xp);
  traffic.read(Stage::mlp, ND, w);
  traffic.write(Stage::mlp, ND, w);

  c.basis = Matrix<T>(E, R);
  for (Index e = 0; e < E; ++e) rbf_expand<T>(geometry.d[e], rbf, c.basis.row_span(e));
  traffic.read(Stage::rbf, E, w);
  traffic.write(Stage::rbf, std::int64_t{E} * R, w);

  c.filter.keep_activations = true;
  c.filters = mlp_rows_forward(block.filter, c.basis, 0, &c.filter, &traffic, Stage::filter, w);

  c.xsrc = Matrix<T>(E, D);
  for (Index e = 0; e < E; ++e) {
    const T* x = c.xp.row(nl.src[e]);
    std::copy(x, x + D, c.xsrc.row(e));
  }
  traffic.read(Stage::gather, ED, w);
  traffic.write(Stage::gather, ED, w);

  c.messages = Matrix<T>(E, D);
  for (std::size_t k = 0; k < c.messages.data.size(); ++k)
    c.messages.data[k] = c.xsrc.data[k] * c.filters.data[k];
  traffic.read(Stage::message, 2 * ED, w);
  traffic.write(Stage::message, ED, w);

  Matrix<T> H;
  if (layouts.aggregation == Aggregation::scatter) {
    H = scatter_add(c.messages, nl.dst, N, &traffic);
    traffic.write(Stage::aggregation, ND, w);
    traffic.read(Stage::aggregation, 2 * ED, w);
    traffic.write(Stage::aggregation, ED, w);
  } else {
    H = segment_reduce(c.messages, *layouts.dst);
    traffic.read(Stage::aggregation, ED, w);
    traffic.write(Stage::aggregation, ND, w);
  }

  Matrix<T> Y = mlp_rows_forward(block.post, H, 0, &c.post, &traffic, Stage::mlp, w);
  for (std::size_t k = 0; k < Y.data.size(); ++k) Y.data[k] += X.data[k];
  traffic.read(Stage::mlp, 2 * ND, w);
  traffic.write(Stage::mlp, ND, w);
  return Y;
}

template <class T>
ReferenceForward<T> reference_energy(const Model<T>& model, const Positions<T>& positions,
                                     std::span<const int> types, const NeighborList& nl,
                                     const ReferenceLayouts& layouts) {
  check_types(types, positions.size(), model.config.num_atom_types);
  ReferenceForward<T> out;
  auto& caches = out.caches;
  caches.model = &model;
  caches.nl = &nl;
  caches.layouts = layouts;
  caches.num_atoms = static_cast<Index>(positions.size());
  caches.geometry = compute_edge_geometry(positions, nl);

  Matrix<T> X = embed(model, types);
  caches.blocks.resize(model.blocks.size());
  for (std::size_t b = 0; b < model.blocks.size(); ++b)
    X = interaction_block<T>(model.blocks[b], model.rbf, X, caches.geometry, nl, layouts,
                             &caches.blocks[b], out.traffic);

  Matrix<T> eps = mlp_rows_forward(model.readout, X, 0, &caches.readout, nullptr, Stage::mlp, 0);
  out.atom_energies.resize(static_cast<std::size_t>(eps.rows));
  for (Index i = 0; i < eps.rows; ++i) {
    out.atom_energies[i] = eps(i, 0);
    out.energy += eps(i, 0);
  }
  return out;
}

template <class T>
Positions<T> reference_forces(ReferenceCaches<T>& caches, TrafficReport& traffic) {
  if (!caches.model || !caches.nl || caches.blocks.size() != caches.model->blocks.size())
    throw ContractViolation("reference_forces: caches do not come from reference_energy");
  constexpr int w = sizeof(T);
  const Model<T>& model = *caches.model;
  const NeighborList& nl = *caches.nl;
  const Index N = caches.num_atoms;
  const Index D = model.hidden_dim();
  const Index E = nl.num_edges();
  const Index R = model.rbf_dim();
  const std::int64_t ND = std::int64_t{N} * D;
  const std::int64_t ED = std::int64_t{E} * D;
  if (caches.geometry.d.size() != static_cast<std::size_t>(E))
    throw ContractViolation("reference_forces: neighbor list changed since the forward pass");

  Matrix<T> ones(N, 1, T(1));
  Matrix<T> gX = mlp_rows_backward(model.readout, caches.readout, ones, 0, nullptr, Stage::mlp, 0);

  Buffer<T> gd_total(static_cast<std::size_t>(E), T(0));
  std::vector<T> grad(static_cast<std::size_t>(R));
  for (std::size_t b = caches.blocks.size(); b-- > 0;) {
    const auto& block = model.blocks[b];
    ReferenceBlockCache<T>& c = caches.blocks[b];

    Matrix<T> gH = mlp_rows_backward(block.post, c.post, gX, 0, &traffic, Stage::mlp, w);

    Matrix<T> gM(E, D);
    for (Index e = 0; e < E; ++e) {
      const T* g = gH.row(nl.dst[e]);
      std::copy(g, g + D, gM.row(e));
    }
    traffic.read(Stage::aggregation, ED, w);
    traffic.write(Stage::aggregation, ED, w);
    gH = {};

    Matrix<T> gXsrc(E, D);
    for (std::size_t k = 0; k < gM.data.size(); ++k) gXsrc.data[k] = gM.data[k] * c.filters.data[k];
    traffic.read(Stage::message, 2 * ED, w);
    traffic.write(Stage::message, ED, w);
    Matrix<T> gW(E, D);
    for (std::size_t k = 0; k < gM.data.size(); ++k) gW.data[k] = gM.data[k] * c.xsrc.data[k];
    traffic.read(Stage::message, 2 * ED, w);
    traffic.write(Stage::message, ED, w);
    gM = {};

    Matrix<T> gXp;
    if (caches.layouts.aggregation == Aggregation::scatter) {
      gXp = scatter_add(gXsrc, nl.src, N, &traffic);
      traffic.write(Stage::gather, ND, w);
      traffic.read(Stage::gather, 2 * ED, w);
      traffic.write(Stage::gather, ED, w);
    } else {
      gXp = segment_reduce(gXsrc, *caches.layouts.src);
      traffic.read(Stage::gather, ED, w);
      traffic.write(Stage::gather, ND, w);
    }
    gXsrc = {};

    Matrix<T> gB = mlp_rows_backward(block.filter, c.filter, gW, 0, &traffic, Stage::filter, w);
    gW = {};

    Buffer<T> gd(static_cast<std::size_t>(E));
    for (Index e = 0; e < E; ++e) {
      rbf_grad<T>(caches.geometry.d[e], model.rbf, grad);
      const T* g = gB.row(e);
      T s = T(0);
      for (Index k = 0; k < R; ++k) s += g[k] * grad[k];
      gd[e] = s;
    }
    traffic.read(Stage::rbf, std::int64_t{E} * (R + 1), w);
    traffic.write(Stage::rbf, E, w);
    for (Index e = 0; e < E; ++e) gd_total[e] += gd[e];

    Matrix<T> gXin;
    dense_rows_backward(block.pre, gXp, gXin);
    traffic.read(Stage::mlp, ND, w);
    traffic.write(Stage::mlp, ND, w);
    for (std::size_t k = 0; k < gXin.data.size(); ++k) gXin.data[k] += gX.data[k];
    traffic.read(Stage::mlp, 2 * ND, w);
    traffic.write(Stage::mlp, ND, w);
    gX = std::move(gXin);
    c = {};
  }

  Positions<T> grad_r(static_cast<std::size_t>(N), Vec3<T>{});
  for (Index e = 0; e < E; ++e) {
    const T d = caches.geometry.d[e];
    if (d < T(1e-12)) continue;
    const T s = gd_total[e] / d;
    const Vec3<T>& u = caches.geometry.u[e];
    for (int k = 0; k < 3; ++k) {
      grad_r[nl.dst[e]][k] += s * u[k];
      grad_r[nl.src[e]][k] -= s * u[k];
    }
  }
  for (auto& f : grad_r)
    for (auto& x : f) x = -x;
  caches.blocks.clear();
  return grad_r;
}

#define FLASHCG_INSTANTIATE(T)                                                               \
  template EdgeGeometry<T> compute_edge_geometry<T>(const Positions<T>&, const NeighborList&); \
  template Matrix<T> cfconv_forward<T>(const Matrix<T>&, const Matrix<T>&,                   \
                                       const NeighborList&, TrafficReport*);                 \
  template Matrix<T> interaction_block<T>(const typename Model<T>::Block&,                   \
                                          const RbfSpec<T>&, const Matrix<T>&,               \
                                          const EdgeGeometry<T>&, const NeighborList&,       \
                                          const ReferenceLayouts&, ReferenceBlockCache<T>*,  \
                                          TrafficReport&);                                   \
  template ReferenceForward<T> reference_energy<T>(const Model<T>&, const Positions<T>&,     \
                                                   std::span<const int>,                     \
                                                   const NeighborList&,                      \
                                                   const ReferenceLayouts&);                 \
  template Positions<T> reference_forces<T>(ReferenceCaches<T>&, TrafficReport&);

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
