#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flashcg/synthetic.hpp"

namespace flashcg {

// System file:
//   [system]  beads = N, energy_unit = kJ/mol | kcal/mol
//   [beads]   one row per bead: type mass x y z      (nm, amu)
//   [bonds]   optional rows: i j k r0               (energy/nm^2, nm)
//   [native]  optional rows: x y z                   (nm)
System read_system(const std::string& path);
void write_system(const std::string& path, const System& system);

struct TrajectoryFrame {
  std::int64_t step = 0;
  int replica = 0;
  std::vector<int> types;
  Positions<double> positions;  // nm
};

// XYZ-style text: bead count, comment "step=S replica=R units=nm", then
// "B<type> x y z" rows.
void write_xyz_frame(std::ostream& out, const TrajectoryFrame& frame);
std::vector<TrajectoryFrame> read_trajectory(const std::string& path);

}  // namespace flashcg
