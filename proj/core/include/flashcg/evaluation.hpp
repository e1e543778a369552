#pragma once

#include <span>
#include <type_traits>

#include "flashcg/model.hpp"
#include "flashcg/neighbor.hpp"
#include "flashcg/traffic.hpp"

namespace flashcg {

// Test hook: deliberately breaks the flash path so verification must fail.
enum class FaultInjection { none, flip_filter_sign };

struct BackendOptions {
  bool fused = true;    // fused edge operator, no materialized edge tensors
  bool segred = true;   // CSR segmented reductions instead of scatter-add
  bool quant = false;   // W16A16 MLPs; requires a quantized model
  int workers = 1;
  int tile_edges = 128;
  FaultInjection fault = FaultInjection::none;

  static BackendOptions reference() { return {false, false, false, 1, 128, FaultInjection::none}; }
  static BackendOptions flash() { return {true, true, false, 1, 128, FaultInjection::none}; }
};

// Positions, distances, energies and forces stay in T (fp32 or fp64) in every
// mode; only MLP weights/activations drop to fp16 when quantized.
template <class T>
struct EnergyForces {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "energies and forces are full precision");

  T energy{};
  std::vector<T> atom_energies;
  Positions<T> forces;
  TrafficReport traffic;
  std::int64_t peak_transient_bytes = 0;
  double layout_ms = 0.0;  // bucket-sort index construction
};

// Energy and forces for a given neighbor list. Layouts are built when the
// segmented-reduction path needs them and none are supplied.
template <class T>
EnergyForces<T> compute_energy_forces(const Model<T>& model, const Positions<T>& positions,
                                      std::span<const int> types, const NeighborList& nl,
                                      const BackendOptions& options,
                                      const CsrLayout* dst_layout = nullptr,
                                      const CsrLayout* src_layout = nullptr);

// End to end: builds the cell-list neighbor graph, layouts, then evaluates.
template <class T>
EnergyForces<T> flash_energy_forces(const Model<T>& model, const Positions<T>& positions,
                                    std::span<const int> types, const BackendOptions& options);

// Energy only, via the reference path; used by finite-difference oracles.
template <class T>
T model_energy(const Model<T>& model, const Positions<T>& positions,
               std::span<const int> types, const NeighborList& nl);

// Embedding lookup X0[i] = embedding[types[i]].
template <class T>
Matrix<T> embed(const Model<T>& model, std::span<const int> types);

void check_types(std::span<const int> types, std::size_t num_atoms, int num_atom_types);

}  // namespace flashcg
