#include "flashcg/evaluation.hpp"

#include <chrono>
#include <string>

#include "flashcg/flash.hpp"
#include "flashcg/memory.hpp"
#include "flashcg/reference.hpp"

namespace flashcg {

void check_types(std::span<const int> types, std::size_t num_atoms, int num_atom_types) {
  if (types.size() != num_atoms)
    throw ConfigError("type array has " + std::to_string(types.size()) + " entries for " +
                      std::to_string(num_atoms) + " beads");
  for (std::size_t i = 0; i < types.size(); ++i)
    if (types[i] < 0 || types[i] >= num_atom_types)
      throw ConfigError("bead " + std::to_string(i) + " has type " + std::to_string(types[i]) +
                        " outside [0, " + std::to_string(num_atom_types) + ")");
}

template <class T>
Matrix<T> embed(const Model<T>& model, std::span<const int> types) {
  const Index D = model.hidden_dim();
  Matrix<T> X(static_cast<Index>(types.size()), D);
  for (std::size_t i = 0; i < types.size(); ++i) {
    const T* row = model.embedding.data() + static_cast<std::size_t>(types[i]) * D;
    std::copy(row, row + D, X.row(static_cast<Index>(i)));
  }
  return X;
}

template <class T>
EnergyForces<T> compute_energy_forces(const Model<T>& model, const Positions<T>& positions,
                                      std::span<const int> types, const NeighborList& nl,
                                      const BackendOptions& options,
                                      const CsrLayout* dst_layout,
                                      const CsrLayout* src_layout) {
  if (options.quant && !model.quantized)
    throw ConfigError("quant mode needs a quantized parameter set");
  if (options.workers < 1) throw ConfigError("workers must be >= 1");

  PeakMemoryScope scope;
  const auto N = static_cast<Index>(positions.size());
  double layout_ms = 0.0;
  CsrLayout dst_local;
  CsrLayout src_local;
  if (options.segred && (!dst_layout || !src_layout)) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!dst_layout) {
      dst_local = group_by_destination(nl, N);
      dst_layout = &dst_local;
    }
    if (!src_layout) {
      src_local = group_by_source(nl, N);
      src_layout = &src_local;
    }
    layout_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  EnergyForces<T> out;
  if (options.fused) {
    out = flash_evaluate<T>(model, positions, types, nl, dst_layout, src_layout, options);
  } else {
    ReferenceLayouts layouts;
    if (options.segred) layouts = {Aggregation::segmented, dst_layout, src_layout};
    auto fwd = reference_energy<T>(model, positions, types, nl, layouts);
    out.energy = fwd.energy;
    out.atom_energies = std::move(fwd.atom_energies);
    out.traffic = fwd.traffic;
    out.forces = reference_forces<T>(fwd.caches, out.traffic);
  }
  out.layout_ms = layout_ms;
  out.peak_transient_bytes = scope.peak_above_baseline();
  return out;
}

template <class T>
EnergyForces<T> flash_energy_forces(const Model<T>& model, const Positions<T>& positions,
                                    std::span<const int> types, const BackendOptions& options) {
  const NeighborList nl = build_neighbors_cells(positions, model.rbf.cutoff);
  return compute_energy_forces(model, positions, types, nl, options);
}

template <class T>
T model_energy(const Model<T>& model, const Positions<T>& positions, std::span<const int> types,
               const NeighborList& nl) {
  return reference_energy<T>(model, positions, types, nl).energy;
}

#define FLASHCG_INSTANTIATE(T)                                                               \
  template Matrix<T> embed<T>(const Model<T>&, std::span<const int>);                        \
  template EnergyForces<T> compute_energy_forces<T>(const Model<T>&, const Positions<T>&,    \
                                                    std::span<const int>,                    \
                                                    const NeighborList&,                     \
                                                    const BackendOptions&, const CsrLayout*, \
                                                    const CsrLayout*);                       \
  template EnergyForces<T> flash_energy_forces<T>(const Model<T>&, const Positions<T>&,      \
                                                  std::span<const int>,                      \
                                                  const BackendOptions&);                    \
  template T model_energy<T>(const Model<T>&, const Positions<T>&, std::span<const int>,     \
                             const NeighborList&);

FLASHCG_INSTANTIATE(float)
FLASHCG_INSTANTIATE(double)
#undef FLASHCG_INSTANTIATE

}  // namespace flashcg
