#pragma once

#include <span>

#include "flashcg/kernels.hpp"
#include "flashcg/model.hpp"
#include "flashcg/neighbor.hpp"
#include "flashcg/traffic.hpp"

namespace flashcg {

template <class T>
struct EdgeGeometry {
  Buffer<Vec3<T>> u;  // r_dst - r_src
  Buffer<T> d;
};

template <class T>
EdgeGeometry<T> compute_edge_geometry(const Positions<T>& positions, const NeighborList& nl);

// h_i = sum over edges into i of x_src (.) w_e, by gather then scatter-add in
// canonical edge order. Records E * D atomic updates.
template <class T>
Matrix<T> cfconv_forward(const Matrix<T>& X, const Matrix<T>& W, const NeighborList& nl,
                         TrafficReport* traffic = nullptr);

enum class Aggregation { scatter, segmented };

// Everything one reference block materializes, kept alive until backward.
template <class T>
struct ReferenceBlockCache {
  Matrix<T> xp;        // pre-linear output, N x D
  Matrix<T> basis;     // B, E x D_r
  RowsMlpCache<T> filter;
  Matrix<T> filters;   // W, E x D
  Matrix<T> xsrc;      // gathered source features, E x D
  Matrix<T> messages;  // M, E x D
  RowsMlpCache<T> post;
};

struct ReferenceLayouts {
  Aggregation aggregation = Aggregation::scatter;
  const CsrLayout* dst = nullptr;  // required for segmented aggregation
  const CsrLayout* src = nullptr;
};

// X' = X + post(cfconv(pre(X), filter(B))). Appends to `cache` when given.
template <class T>
Matrix<T> interaction_block(const typename Model<T>::Block& block, const RbfSpec<T>& rbf,
                            const Matrix<T>& X, const EdgeGeometry<T>& geometry,
                            const NeighborList& nl, const ReferenceLayouts& layouts,
                            ReferenceBlockCache<T>* cache, TrafficReport& traffic);

template <class T>
struct ReferenceCaches {
  const Model<T>* model = nullptr;
  const NeighborList* nl = nullptr;
  ReferenceLayouts layouts;
  Index num_atoms = 0;
  EdgeGeometry<T> geometry;
  std::vector<ReferenceBlockCache<T>> blocks;
  RowsMlpCache<T> readout;
};

template <class T>
struct ReferenceForward {
  T energy{};
  std::vector<T> atom_energies;
  ReferenceCaches<T> caches;
  TrafficReport traffic;
};

template <class T>
ReferenceForward<T> reference_energy(const Model<T>& model, const Positions<T>& positions,
                                     std::span<const int> types, const NeighborList& nl,
                                     const ReferenceLayouts& layouts = {});

// Analytic backward through the cached forward. Consumes the caches.
template <class T>
Positions<T> reference_forces(ReferenceCaches<T>& caches, TrafficReport& traffic);

}  // namespace flashcg
