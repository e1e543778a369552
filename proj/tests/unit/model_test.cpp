#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "flashcg/evaluation.hpp"
#include "flashcg/model.hpp"
#include "flashcg/neighbor.hpp"
#include "flashcg/params_io.hpp"
#include "flashcg/synthetic.hpp"
#include "test_util.hpp"

using namespace flashcg;
using flashcg::testing::small_config;

namespace {

// Straight-line evaluation in double from the stored parameters: no layouts,
// no caches, pairs enumerated directly.
double naive_energy(const ModelParams& p, const Positions<double>& x, const std::vector<int>& types) {
  const int n = static_cast<int>(x.size());
  const int D = p.config.hidden_dim;
  const double rc = p.config.cutoff;
  const int Dr = p.config.rbf_dim;
  const double spacing = rc / (Dr - 1);
  const double gamma = 1.0 / (2.0 * spacing * spacing);
  auto ssp = [](double v) { return std::log(0.5 * std::exp(v) + 0.5); };
  auto affine = [](const Linear& l, const std::vector<double>& in) {
    std::vector<double> out(l.out_dim);
    for (int o = 0; o < l.out_dim; ++o) {
      double s = l.bias[o];
      for (int k = 0; k < l.in_dim; ++k) s += double(l.weight[o * l.in_dim + k]) * in[k];
      out[o] = s;
    }
    return out;
  };
  auto mlp = [&](const Mlp& m, std::vector<double> v) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      v = affine(m.layers[l], v);
      if (l + 1 < m.layers.size())
        for (auto& e : v) e = ssp(e);
    }
    return v;
  };

  std::vector<std::vector<double>> X(n, std::vector<double>(D));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < D; ++k) X[i][k] = p.embedding[types[i] * D + k];
  for (const auto& block : p.blocks) {
    std::vector<std::vector<double>> xp(n);
    for (int i = 0; i < n; ++i) xp[i] = affine(block.pre, X[i]);
    for (int i = 0; i < n; ++i) {
      std::vector<double> h(D, 0.0);
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = std::sqrt(std::pow(x[i][0] - x[j][0], 2) + std::pow(x[i][1] - x[j][1], 2) +
                                   std::pow(x[i][2] - x[j][2], 2));
        if (!(d < rc)) continue;
        const double env = 0.5 * (std::cos(M_PI * d / rc) + 1.0);
        std::vector<double> b(Dr);
        for (int k = 0; k < Dr; ++k) b[k] = std::exp(-gamma * std::pow(d - k * spacing, 2)) * env;
        const auto w = mlp(block.filter, b);
        for (int k = 0; k < D; ++k) h[k] += xp[j][k] * w[k];
      }
      const auto u = mlp(block.post, h);
      for (int k = 0; k < D; ++k) X[i][k] += u[k];
    }
  }
  double e = 0.0;
  for (int i = 0; i < n; ++i) e += mlp(p.readout, X[i])[0];
  return e;
}

}  // namespace

TEST(Activation, ShiftedSoftplusMatchesDefinition) {
  for (double x : {-30.0, -2.0, -0.5, 0.0, 0.3, 1.0, 5.0, 20.0}) {
    const double expect = std::log(0.5 * std::exp(x) + 0.5);
    EXPECT_NEAR(shifted_softplus(x), expect, 1e-14 * std::max(1.0, std::abs(expect)));
  }
  EXPECT_EQ(shifted_softplus(0.0), 0.0);
  // no overflow far out
  EXPECT_NEAR(shifted_softplus(800.0), 800.0 - std::log(2.0), 1e-9);
  EXPECT_NEAR(shifted_softplus(-800.0), -std::log(2.0), 1e-12);
}

TEST(Activation, GradientIsSigmoidAndMatchesFiniteDifference) {
  const double h = 1e-6;
  for (double x : {-10.0, -1.0, 0.0, 0.7, 4.0}) {
    const double fd = (shifted_softplus(x + h) - shifted_softplus(x - h)) / (2 * h);
    EXPECT_NEAR(shifted_softplus_grad(x), fd, 1e-8);
    EXPECT_NEAR(shifted_softplus_grad(x), 1.0 / (1.0 + std::exp(-x)), 1e-15);
  }
}

TEST(Rbf, UniformCentersAndWidth) {
  const auto spec = RbfSpec<double>::uniform(5, 1.2);
  ASSERT_EQ(spec.dim(), 5);
  EXPECT_DOUBLE_EQ(spec.centers.front(), 0.0);
  EXPECT_DOUBLE_EQ(spec.centers.back(), 1.2);
  EXPECT_DOUBLE_EQ(spec.gamma, 1.0 / (2 * 0.3 * 0.3));
  EXPECT_THROW(RbfSpec<double>::uniform(0, 1.0), ConfigError);
  EXPECT_THROW(RbfSpec<double>::uniform(4, 0.0), ConfigError);
}

TEST(Rbf, EnvelopeVanishesAtAndBeyondCutoff) {
  const auto spec = RbfSpec<double>::uniform(8, 1.0);
  for (double d : {1.0, 1.0 + 1e-12, 2.5}) {
    for (double v : rbf_expand(d, spec)) EXPECT_EQ(v, 0.0);
    for (double v : rbf_grad(d, spec)) EXPECT_EQ(v, 0.0);
  }
  // smooth approach: basis and its slope both go to zero
  for (double v : rbf_expand(1.0 - 1e-4, spec)) EXPECT_LT(std::abs(v), 1e-7);
  EXPECT_DOUBLE_EQ(cosine_envelope(0.0, 1.0), 1.0);
  EXPECT_NEAR(cosine_envelope(0.5, 1.0), 0.5, 1e-15);
}

TEST(Rbf, GradientMatchesFiniteDifference) {
  const auto spec = RbfSpec<double>::uniform(16, 1.3);
  const double h = 1e-6;
  for (double d : {0.05, 0.31, 0.7, 1.1, 1.29}) {
    const auto g = rbf_grad(d, spec);
    const auto up = rbf_expand(d + h, spec);
    const auto dn = rbf_expand(d - h, spec);
    for (int k = 0; k < spec.dim(); ++k) EXPECT_NEAR(g[k], (up[k] - dn[k]) / (2 * h), 1e-7) << d;
  }
}

TEST(Rbf, FloatBasisHasNoSubnormals) {
  const auto spec = RbfSpec<float>::uniform(64, 1.5f);
  for (float d = 0.0f; d < 1.5f; d += 0.01f)
    for (float v : rbf_expand(d, spec)) EXPECT_NE(std::fpclassify(v), FP_SUBNORMAL);
}

TEST(Model, InitIsDeterministicAndValid) {
  const auto c = small_config();
  const auto a = init_params(c, 7);
  const auto b = init_params(c, 7);
  const auto d = init_params(c, 8);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_NE(a.embedding, d.embedding);
  EXPECT_NO_THROW(a.validate());
  EXPECT_FALSE(a.quantized());
  int layers = 0;
  for_each_linear(a, [&](const std::string&, const Linear&) { ++layers; });
  EXPECT_EQ(layers, c.num_blocks * 5 + 2);
}

TEST(Model, ConfigValidation) {
  auto c = small_config();
  c.hidden_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.cutoff = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.cutoff = std::nan("");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Model, MlpBackwardMatchesFiniteDifference) {
  const auto params = init_params(small_config(), 3);
  const auto model = Model<double>::from_params(params);
  const auto& mlp = model.blocks[0].filter;
  std::vector<double> x(mlp.in_dim());
  for (int i = 0; i < mlp.in_dim(); ++i) x[i] = 0.1 * i - 0.3;
  std::vector<double> gout(mlp.out_dim());
  for (int i = 0; i < mlp.out_dim(); ++i) gout[i] = std::sin(i + 1.0);
  const auto fwd = mlp_forward(mlp, std::span<const double>(x));
  const auto g = mlp_backward_input(mlp, fwd.cache, std::span<const double>(gout));
  auto f = [&](const std::vector<double>& in) {
    const auto y = mlp_forward(mlp, std::span<const double>(in)).output;
    double s = 0;
    for (int i = 0; i < mlp.out_dim(); ++i) s += y[i] * gout[i];
    return s;
  };
  for (int i = 0; i < mlp.in_dim(); ++i) {
    auto up = x, dn = x;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    EXPECT_NEAR(g[i], (f(up) - f(dn)) / 2e-6, 1e-7);
  }
  // cache from a different MLP is rejected
  EXPECT_THROW(mlp_backward_input(model.blocks[1].filter, fwd.cache, std::span<const double>(gout)),
               ContractViolation);
}

TEST(Model, EnergyMatchesNaiveOracle) {
  for (int trial = 0; trial < 4; ++trial) {
    const auto c = small_config(1 + trial % 3);
    const auto params = init_params(c, 100 + trial);
    const auto model = Model<double>::from_params(params);
    const auto x = random_cloud(24, 1.6, 0.1, 200 + trial);
    const auto types = flashcg::testing::random_types(24, c.num_atom_types, trial);
    const auto nl = build_neighbors_bruteforce(x, c.cutoff);
    ASSERT_GT(nl.num_edges(), 0);
    const double expect = naive_energy(params, x, types);
    for (auto opts : {BackendOptions::reference(), BackendOptions::flash()}) {
      const auto ef = compute_energy_forces(model, x, types, nl, opts);
      EXPECT_NEAR(ef.energy, expect, 1e-11 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(Model, TypeChecks) {
  const auto c = small_config();
  const std::vector<int> bad{0, 1, c.num_atom_types};
  EXPECT_THROW(check_types(bad, 3, c.num_atom_types), ConfigError);
  EXPECT_THROW(check_types(std::vector<int>{0, 1}, 3, c.num_atom_types), ConfigError);
  EXPECT_NO_THROW(check_types(std::vector<int>{0, 1, 4}, 3, c.num_atom_types));
}

TEST(Params, FileRoundTrip) {
  const auto params = init_params(small_config(), 11);
  const auto path = flashcg::testing::temp_path("model_roundtrip.flcg");
  save_params(path, params);
  const auto back = load_params(path);
  EXPECT_EQ(back.config, params.config);
  EXPECT_EQ(back.embedding, params.embedding);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    EXPECT_EQ(back.blocks[b].pre.weight, params.blocks[b].pre.weight);
    EXPECT_EQ(back.blocks[b].filter.layers[1].bias, params.blocks[b].filter.layers[1].bias);
  }
  EXPECT_EQ(back.readout.layers[1].weight, params.readout.layers[1].weight);
}

TEST(Params, ShapeMismatchNamesTensor) {
  const auto params = init_params(small_config(), 11);
  const auto path = flashcg::testing::temp_path("model_mismatch.flcg");
  save_params(path, params);
  auto other = small_config();
  other.hidden_dim = 32;
  try {
    load_params(path, other);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("embedding"), std::string::npos) << e.what();
  }
}

TEST(Params, RejectsGarbageAndMissingFiles) {
  const auto path = flashcg::testing::temp_path("garbage.flcg");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE this is not a parameter file";
  }
  EXPECT_THROW(load_params(path), ConfigError);
  EXPECT_THROW(load_params(flashcg::testing::temp_path("does_not_exist.flcg")), ConfigError);
}
