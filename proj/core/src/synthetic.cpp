#include "flashcg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace flashcg {

void System::validate() const {
  const std::size_t n = types.size();
  if (n == 0) throw ConfigError("system has no beads");
  if (masses.size() != n || positions.size() != n)
    throw ConfigError("system: types, masses and positions differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (types[i] < 0) throw ConfigError("system: negative type at bead " + std::to_string(i));
    if (!(masses[i] > 0.0) || !std::isfinite(masses[i]))
      throw ConfigError("system: mass of bead " + std::to_string(i) + " must be positive");
    for (double x : positions[i])
      if (!std::isfinite(x)) throw ConfigError("system: non-finite coordinate at bead " + std::to_string(i));
  }
  for (const auto& b : bonds) {
    if (b.i < 0 || b.j < 0 || static_cast<std::size_t>(b.i) >= n ||
        static_cast<std::size_t>(b.j) >= n || b.i == b.j)
      throw ConfigError("system: bond " + std::to_string(b.i) + "-" + std::to_string(b.j) +
                        " has invalid bead indices");
    if (!(b.k >= 0.0) || !(b.r0 > 0.0))
      throw ConfigError("system: bond needs k >= 0 and r0 > 0");
  }
  if (native && native->size() != n) throw ConfigError("system: native reference has wrong length");
  if (energy_unit != "kJ/mol" && energy_unit != "kcal/mol")
    throw ConfigError("system: unknown energy unit '" + energy_unit + "'");
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Vec3<double> random_unit(Rng& rng) {
  const double z = 2.0 * uniform(rng) - 1.0;
  const double phi = 2.0 * std::numbers::pi * uniform(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

bool clashes(const Positions<double>& pos, const Vec3<double>& p, double min_d) {
  const double m2 = min_d * min_d;
  for (const auto& q : pos) {
    const auto d = p - q;
    if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < m2) return true;
  }
  return false;
}

// Random walk with fixed step; optionally confined to a sphere of radius `confine`.
Positions<double> walk(int n, double step, double confine, Rng& rng) {
  Positions<double> pos;
  pos.push_back({0.0, 0.0, 0.0});
  const double min_d = 0.8 * step;
  while (static_cast<int>(pos.size()) < n) {
    Vec3<double> best{};
    bool found = false;
    for (int attempt = 0; attempt < 200 && !found; ++attempt) {
      const Vec3<double> cand = pos.back() + step * random_unit(rng);
      if (confine > 0.0 && norm(cand) > confine) continue;
      if (clashes(pos, cand, min_d)) continue;
      best = cand;
      found = true;
    }
    if (!found) best = pos.back() + step * random_unit(rng);
    pos.push_back(best);
  }
  return pos;
}

}  // namespace

System generate_system(const GeneratorOptions& o) {
  if (o.beads < 1) throw ConfigError("generator: beads must be >= 1");
  if (o.num_types < 1) throw ConfigError("generator: num_types must be >= 1");
  if (!(o.bond_length > 0.0)) throw ConfigError("generator: bond_length must be > 0");
  Rng rng(o.seed);
  System s;
  switch (o.shape) {
    case SystemShape::coil:
      s.positions = walk(o.beads, o.bond_length, 0.0, rng);
      break;
    case SystemShape::helix: {
      // 100 degrees and 0.15 nm rise per bead; radius chosen for the bond length.
      const double turn = 100.0 * std::numbers::pi / 180.0;
      const double rise = 0.15;
      const double chord = std::sqrt(std::max(o.bond_length * o.bond_length - rise * rise, 1e-6));
      const double radius = chord / (2.0 * std::sin(turn / 2.0));
      for (int i = 0; i < o.beads; ++i)
        s.positions.push_back({radius * std::cos(turn * i), radius * std::sin(turn * i), rise * i});
      break;
    }
    case SystemShape::globule: {
      if (!(o.density > 0.0)) throw ConfigError("generator: density must be > 0");
      const double radius = std::cbrt(3.0 * o.beads / (4.0 * std::numbers::pi * o.density));
      s.positions = walk(o.beads, o.bond_length, radius, rng);
      break;
    }
  }
  for (int i = 0; i < o.beads; ++i) {
    s.types.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(o.num_types)));
    s.masses.push_back(o.mass);
  }
  for (int i = 0; i + 1 < o.beads; ++i) {
    const double r0 = norm(s.positions[i + 1] - s.positions[i]);
    s.bonds.push_back({i, i + 1, o.bond_k, r0});
  }
  s.native = s.positions;
  return s;
}

Positions<double> random_cloud(int n, double box, double min_distance, std::uint64_t seed) {
  Rng rng(seed);
  Positions<double> pos;
  for (int i = 0; i < n; ++i) {
    Vec3<double> p{};
    for (int attempt = 0; attempt < 100; ++attempt) {
      p = {box * uniform(rng), box * uniform(rng), box * uniform(rng)};
      if (min_distance <= 0.0 || !clashes(pos, p, min_distance)) break;
    }
    pos.push_back(p);
  }
  return pos;
}

Positions<double> degree_skew_positions(int n, std::int64_t target_edges, bool skewed,
                                        double cutoff, std::uint64_t seed) {
  if (n < 2 || target_edges < 0) throw ConfigError("degree_skew_positions: invalid size");
  Rng rng(seed);
  std::vector<int> sizes;
  int used = 0;
  if (!skewed) {
    const int s = std::max(2, static_cast<int>(std::lround(static_cast<double>(target_edges) / n)) + 1);
    while (used + s <= n) {
      sizes.push_back(s);
      used += s;
    }
  } else {
    // Pareto(alpha = 1.2) cluster sizes times a common factor x, truncated so
    // one cluster cannot hold more than a quarter of the edge budget. x is the
    // smallest factor whose clusters reach the budget within n beads.
    const int cap = std::max(2, static_cast<int>(std::sqrt(static_cast<double>(target_edges) / 4.0)));
    std::vector<double> draws(static_cast<std::size_t>(n));
    for (auto& d : draws) d = std::pow(std::max(uniform(rng), 1e-12), -1.0 / 1.2);
    auto pack = [&](double x, std::vector<int>& out) {
      out.clear();
      std::int64_t edges = 0;
      int beads = 0;
      for (std::size_t c = 0; c < draws.size() && edges < target_edges && beads < n; ++c) {
        int s = std::clamp(static_cast<int>(2.0 * x * draws[c]), 2, cap);
        s = std::min(s, n - beads);
        const std::int64_t left = target_edges - edges;
        if (static_cast<std::int64_t>(s) * (s - 1) > left)
          s = std::max(2, static_cast<int>(std::floor(0.5 + std::sqrt(0.25 + static_cast<double>(left)))));
        if (s > n - beads) break;
        out.push_back(s);
        beads += s;
        edges += static_cast<std::int64_t>(s) * (s - 1);
      }
      return edges;
    };
    double lo = 1.0;
    double hi = static_cast<double>(cap);
    if (pack(lo, sizes) < target_edges) {
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (pack(mid, sizes) >= target_edges ? hi : lo) = mid;
      }
      pack(hi, sizes);
    }
    for (int s : sizes) used += s;
  }
  while (used < n) {
    sizes.push_back(1);
    ++used;
  }
  // Shuffle so hubs are spread over the index range.
  std::shuffle(sizes.begin(), sizes.end(), rng);

  const double spacing = 2.0 * cutoff + 0.5;
  const double ball = 0.45 * cutoff;  // diameter below the cutoff
  const int side = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(sizes.size()))));
  Positions<double> pos;
  pos.reserve(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const auto cc = static_cast<int>(c);
    const Vec3<double> center{spacing * (cc % side), spacing * ((cc / side) % side),
                              spacing * (cc / (side * side))};
    for (int k = 0; k < sizes[c]; ++k) {
      const double r = ball * std::cbrt(uniform(rng));
      pos.push_back(center + r * random_unit(rng));
    }
  }
  return pos;
}

}  // namespace flashcg
