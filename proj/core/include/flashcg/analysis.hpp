#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flashcg/system_io.hpp"
#include "flashcg/types.hpp"

namespace flashcg {

struct Alignment {
  std::array<std::array<double, 3>, 3> rotation{};  // row-major, applied as R·x
  Vec3<double> translation{};
  double rmsd = 0.0;
};

// Optimal proper rigid superposition of x onto x_ref (Kabsch). Throws
// ConfigError for N < 3 or degenerate (collinear) inputs.
Alignment kabsch_align(const Positions<double>& x, const Positions<double>& x_ref);
Positions<double> apply_alignment(const Alignment& a, const Positions<double>& x);
double rmsd(const Positions<double>& x, const Positions<double>& x_ref);

struct Contact {
  int i = 0;
  int j = 0;
  double r0 = 0.0;
};

struct ContactSet {
  std::vector<Contact> pairs;
  std::size_t count() const { return pairs.size(); }
};

constexpr double kContactCutoff = 0.9;  // nm, bead distance
constexpr int kContactMinSeparation = 3;
constexpr double kQBeta = 10.0;  // 1/nm
constexpr double kQLambda = 1.5;

ContactSet build_contacts(const Positions<double>& x_ref, double cutoff = kContactCutoff,
                          int min_separation = kContactMinSeparation);
double contact_value(double r, double r0, double beta = kQBeta, double lambda = kQLambda);
double fraction_native_contacts(const Positions<double>& x, const ContactSet& contacts,
                                double beta = kQBeta, double lambda = kQLambda);

struct GdtScore {
  std::array<double, 4> fractions{};  // cutoffs 0.1, 0.2, 0.4, 0.8 nm
  double score = 0.0;
};
GdtScore gdt_ts(const Positions<double>& x, const Positions<double>& x_ref);

std::vector<double> savitzky_golay(const std::vector<double>& series, int window, int order);

constexpr int kQBins = 100;
constexpr int kSmoothWindow = 11;
constexpr int kSmoothOrder = 3;
double largest_metastable_q(const std::vector<double>& q);

struct FrameGraphStats {
  std::int64_t edges = 0;
  double mean_degree = 0.0;
  int max_degree = 0;
  double mean_bandwidth = 0.0;  // mean |i - j| over edges
  int max_bandwidth = 0;
};
FrameGraphStats frame_graph_stats(const Positions<double>& x, double cutoff);
std::vector<FrameGraphStats> graph_stats(const std::vector<TrajectoryFrame>& frames, double cutoff);

struct MetricRow {
  std::int64_t frame = 0;
  std::int64_t step = 0;
  int replica = 0;
  double rmsd = 0.0;
  double q = -1.0;    // < 0 when not computed
  double gdt = -1.0;  // < 0 when not computed
  std::int64_t edges = 0;
};

}  // namespace flashcg
