#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flashcg/evaluation.hpp"
#include "flashcg/flash.hpp"
#include "flashcg/neighbor.hpp"
#include "flashcg/reference.hpp"
#include "flashcg/synthetic.hpp"
#include "flashcg/traffic.hpp"
#include "test_util.hpp"

using namespace flashcg;
using flashcg::testing::random_types;
using flashcg::testing::small_config;

namespace {

double max_abs_diff(const Positions<double>& a, const Positions<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(a[i][k] - b[i][k]));
  return m;
}

double max_abs(const Positions<double>& a) {
  double m = 0;
  for (const auto& v : a)
    for (double c : v) m = std::max(m, std::abs(c));
  return m;
}

struct Setup {
  ModelParams params;
  Positions<double> x;
  std::vector<int> types;
  NeighborList nl;
};

Setup setup(int n, double box, int blocks, std::uint64_t seed) {
  Setup s;
  s.params = init_params(small_config(blocks), seed);
  s.x = random_cloud(n, box, 0.08, seed + 1);
  s.types = random_types(n, s.params.config.num_atom_types, seed + 2);
  s.nl = build_neighbors_cells(s.x, s.params.config.cutoff);
  return s;
}

Positions<double> rotate(const Positions<double>& x, double angle, Vec3<double> shift) {
  const double c = std::cos(angle), s = std::sin(angle);
  Positions<double> out;
  for (const auto& p : x)
    out.push_back({c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1], p[2] + shift[2]});
  return out;
}

}  // namespace

TEST(Pipeline, AllBackendCombinationsAgreeInDouble) {
  for (int trial = 0; trial < 6; ++trial) {
    const auto s = setup(30 + 20 * trial, 1.8, 1 + trial % 3, 10 + trial);
    const auto model = Model<double>::from_params(s.params);
    const auto ref = compute_energy_forces(model, s.x, s.types, s.nl, BackendOptions::reference());
    for (bool fused : {false, true})
      for (bool segred : {false, true})
        for (int tile : {1, 7, 128}) {
          BackendOptions o{fused, segred, false, 1 + trial % 3, tile, FaultInjection::none};
          const auto got = compute_energy_forces(model, s.x, s.types, s.nl, o);
          EXPECT_NEAR(got.energy, ref.energy, 1e-12 * std::max(1.0, std::abs(ref.energy)));
          EXPECT_LE(max_abs_diff(got.forces, ref.forces), 1e-11 * std::max(1.0, max_abs(ref.forces)));
        }
  }
}

TEST(Pipeline, FlashFloatWithinTolerance) {
  const auto s = setup(150, 2.0, 3, 77);
  const auto model = Model<float>::from_params(s.params);
  const auto x = convert_positions<float>(s.x);
  const auto nl = build_neighbors_cells(x, 1.0f);
  const auto ref = compute_energy_forces(model, x, s.types, nl, BackendOptions::reference());
  const auto fl = compute_energy_forces(model, x, s.types, nl, BackendOptions::flash());
  EXPECT_LE(std::abs(fl.energy - ref.energy) / std::abs(ref.energy), 1e-5);
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      diff = std::max(diff, double(std::abs(fl.forces[i][k] - ref.forces[i][k])));
      scale = std::max(scale, double(std::abs(ref.forces[i][k])));
    }
  EXPECT_LE(diff / scale, 1e-4);
}

TEST(Pipeline, ForcesMatchFiniteDifferences) {
  const auto s = setup(20, 1.3, 2, 5);
  const auto model = Model<double>::from_params(s.params);
  const auto ef = compute_energy_forces(model, s.x, s.types, s.nl, BackendOptions::flash());
  const double h = 1e-5;
  for (int i = 0; i < 20; i += 3)
    for (int k = 0; k < 3; ++k) {
      auto up = s.x, dn = s.x;
      up[i][k] += h;
      dn[i][k] -= h;
      const double fd = -(model_energy(model, up, s.types, s.nl) - model_energy(model, dn, s.types, s.nl)) / (2 * h);
      EXPECT_NEAR(ef.forces[i][k], fd, 1e-6 * std::max(1.0, max_abs(ef.forces)));
    }
}

TEST(Pipeline, InvariancesAndMomentumConservation) {
  const auto s = setup(60, 1.7, 2, 31);
  const auto model = Model<double>::from_params(s.params);
  const auto a = flash_energy_forces(model, s.x, s.types, BackendOptions::flash());
  const auto moved = rotate(s.x, 0.7, {3.0, -1.0, 0.5});
  const auto b = flash_energy_forces(model, moved, s.types, BackendOptions::flash());
  EXPECT_NEAR(a.energy, b.energy, 1e-10 * std::abs(a.energy));
  // forces rotate with the frame
  const auto fa_rot = rotate(a.forces, 0.7, {0, 0, 0});
  EXPECT_LE(max_abs_diff(fa_rot, b.forces), 1e-9 * max_abs(a.forces));
  Vec3<double> total{0, 0, 0};
  for (const auto& f : a.forces) total = total + f;
  for (double t : total) EXPECT_NEAR(t, 0.0, 1e-10 * max_abs(a.forces) * 60);
  // permuting bead order permutes forces
  Positions<double> xp(s.x.rbegin(), s.x.rend());
  std::vector<int> tp(s.types.rbegin(), s.types.rend());
  const auto c = flash_energy_forces(model, xp, tp, BackendOptions::flash());
  EXPECT_NEAR(a.energy, c.energy, 1e-10 * std::abs(a.energy));
  EXPECT_NEAR(c.forces[0][1], a.forces[59][1], 1e-10 * max_abs(a.forces));
}

TEST(Pipeline, NoEdgesGivesReadoutOnlyEnergyAndZeroForce) {
  const auto params = init_params(small_config(), 2);
  const auto model = Model<double>::from_params(params);
  Positions<double> x{{0, 0, 0}, {5, 0, 0}, {0, 5, 0}};
  const std::vector<int> types{0, 1, 2};
  const auto a = flash_energy_forces(model, x, types, BackendOptions::flash());
  const auto b = flash_energy_forces(model, x, types, BackendOptions::reference());
  EXPECT_EQ(a.energy, b.energy);
  for (const auto& f : a.forces)
    for (double v : f) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.traffic.atomic_updates, 0);
}

TEST(Pipeline, TrafficEqualsClosedForms) {
  for (int blocks : {1, 2, 3}) {
    const auto s = setup(90, 1.6, blocks, 50 + blocks);
    const auto& c = s.params.config;
    const auto model = Model<float>::from_params(s.params);
    const auto x = convert_positions<float>(s.x);
    const auto nl = build_neighbors_cells(x, float(c.cutoff));
    const IoShape shape{90, nl.num_edges(), c.hidden_dim, c.rbf_dim, c.filter_hidden_dim, blocks, 4};
    const auto f = compute_energy_forces(model, x, s.types, nl, BackendOptions::flash());
    const auto r = compute_energy_forces(model, x, s.types, nl, BackendOptions::reference());
    EXPECT_EQ(f.traffic, io_model_flash(shape));
    EXPECT_EQ(r.traffic, io_model_base(shape));
    EXPECT_EQ(f.traffic.atomic_updates, 0);
    EXPECT_EQ(r.traffic.atomic_updates, 2LL * nl.num_edges() * c.hidden_dim * blocks);
  }
}

TEST(Traffic, ClosedFormTotals) {
  // Totals recomputed from the per-block scalar counts.
  const IoShape s{1000, 40000, 128, 64, 128, 3, 4};
  const std::int64_t N = s.nodes, E = s.edges, D = s.hidden, Dr = s.rbf, H = s.filter_hidden;
  EXPECT_EQ(io_model_flash(s).total(), s.blocks * s.width * (7 * E + 2 * E * D + 26 * N * D + 3 * N));
  EXPECT_EQ(io_model_base(s).total(),
            s.blocks * s.width * (E * (4 * Dr + 3 + 9 * H + 2 * D) + 19 * E * D + 25 * N * D));
  const double ratio = double(io_model_base(s).total()) / double(io_model_flash(s).total());
  EXPECT_GT(ratio, 10.0);
  // scaling: doubling T doubles everything; the ratio grows with E/N
  IoShape t = s;
  t.blocks = 6;
  EXPECT_EQ(io_model_flash(t).total(), 2 * io_model_flash(s).total());
  EXPECT_EQ(io_model_base(t).total(), 2 * io_model_base(s).total());
  IoShape dense = s;
  dense.edges = 80000;
  EXPECT_GT(double(io_model_base(dense).total()) / double(io_model_flash(dense).total()), ratio);
}

TEST(Pipeline, PeakTransientMemoryFarBelowReference) {
  ModelConfig cfg;  // D = 128
  cfg.num_blocks = 2;
  const auto params = init_params(cfg, 1);
  const auto model = Model<float>::from_params(params);
  const auto x = convert_positions<float>(random_cloud(200, 2.6, 0.1, 4));
  const auto types = random_types(200, cfg.num_atom_types, 4);
  const auto nl = build_neighbors_cells(x, float(cfg.cutoff));
  ASSERT_GT(nl.num_edges(), 200 * 10);
  const auto f = compute_energy_forces(model, x, types, nl, BackendOptions::flash());
  const auto r = compute_energy_forces(model, x, types, nl, BackendOptions::reference());
  EXPECT_GT(f.peak_transient_bytes, 0);
  EXPECT_GT(r.peak_transient_bytes, 8 * f.peak_transient_bytes);
}

TEST(Pipeline, InjectedFaultIsVisible) {
  const auto s = setup(40, 1.4, 2, 9);
  const auto model = Model<double>::from_params(s.params);
  auto opts = BackendOptions::flash();
  opts.fault = FaultInjection::flip_filter_sign;
  const auto bad = compute_energy_forces(model, s.x, s.types, s.nl, opts);
  const auto ref = compute_energy_forces(model, s.x, s.types, s.nl, BackendOptions::reference());
  EXPECT_GT(std::abs(bad.energy - ref.energy), 1e-6 * std::abs(ref.energy));
}

TEST(Pipeline, RejectsInvalidRequests) {
  const auto s = setup(10, 1.0, 1, 3);
  const auto model = Model<double>::from_params(s.params);
  auto q = BackendOptions::flash();
  q.quant = true;
  EXPECT_THROW(compute_energy_forces(model, s.x, s.types, s.nl, q), ConfigError);
  auto w = BackendOptions::flash();
  w.workers = 0;
  EXPECT_THROW(compute_energy_forces(model, s.x, s.types, s.nl, w), ConfigError);
  std::vector<int> short_types(s.types.begin(), s.types.end() - 1);
  EXPECT_THROW(compute_energy_forces(model, s.x, short_types, s.nl, BackendOptions::flash()), ConfigError);
}

TEST(Pipeline, ReferenceCfconvCountsAtomics) {
  const auto s = setup(30, 1.2, 1, 8);
  Matrix<double> X(30, 4, 1.0), W(s.nl.num_edges(), 4, 2.0);
  TrafficReport t;
  const auto h = cfconv_forward(X, W, s.nl, &t);
  EXPECT_EQ(t.atomic_updates, std::int64_t(s.nl.num_edges()) * 4);
  std::vector<int> degree(30, 0);
  for (Index e = 0; e < s.nl.num_edges(); ++e) ++degree[s.nl.dst[e]];
  for (Index i = 0; i < 30; ++i) EXPECT_EQ(h(i, 2), 2.0 * degree[i]);
}
