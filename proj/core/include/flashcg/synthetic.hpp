#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flashcg/types.hpp"

namespace flashcg {

struct Bond {
  Index i = 0;
  Index j = 0;
  double k = 0.0;   // energy / nm^2
  double r0 = 0.0;  // nm
};

// A bead system as described by a system file.
struct System {
  std::vector<int> types;
  std::vector<double> masses;  // amu
  Positions<double> positions;
  std::vector<Bond> bonds;
  std::optional<Positions<double>> native;
  std::string energy_unit = "kJ/mol";

  Index size() const { return static_cast<Index>(types.size()); }
  void validate() const;
};

enum class SystemShape { coil, helix, globule };

struct GeneratorOptions {
  SystemShape shape = SystemShape::coil;
  int beads = 32;
  int num_types = 20;
  double bond_length = 0.38;  // nm
  double bond_k = 5000.0;     // kJ/mol/nm^2
  double mass = 110.0;        // amu
  double density = 1.5;       // beads per nm^3, globule only
  std::uint64_t seed = 0;
};

// Chain with harmonic bonds between consecutive beads; the generated
// coordinates double as the native reference.
System generate_system(const GeneratorOptions& options);

// Beads uniformly in a cube of side `box`, at least `min_distance` apart when
// that is achievable within a bounded number of attempts.
Positions<double> random_cloud(int n, double box, double min_distance, std::uint64_t seed);

// Degree-controlled geometry for a fixed bead count and roughly fixed edge count.
// Beads form tight clusters (every pair within `cutoff`) spaced beyond the
// cutoff, so a cluster of size s contributes s (s - 1) directed edges.
// skewed = false: equal clusters; true: power-law cluster sizes plus isolated beads.
Positions<double> degree_skew_positions(int n, std::int64_t target_edges, bool skewed,
                                        double cutoff, std::uint64_t seed);

}  // namespace flashcg
