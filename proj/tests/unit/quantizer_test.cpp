#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "flashcg/evaluation.hpp"
#include "flashcg/half.hpp"
#include "flashcg/params_io.hpp"
#include "flashcg/quantizer.hpp"
#include "test_util.hpp"

using namespace flashcg;

namespace {

Linear random_linear(int in, int out, std::uint64_t seed, double spread_decades = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Linear l(in, out);
  for (int o = 0; o < out; ++o) {
    // row magnitudes spread over `spread_decades` decades
    const double mag = out > 1 ? std::pow(10.0, -spread_decades * o / (out - 1)) : 1.0;
    for (int k = 0; k < in; ++k) l.weight[o * in + k] = static_cast<float>(mag * u(rng));
    l.bias[o] = static_cast<float>(u(rng));
  }
  return l;
}

CalibrationSet random_calib(int width, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  CalibrationSet c;
  c.width = width;
  c.samples.resize(static_cast<std::size_t>(width) * count);
  for (auto& v : c.samples) v = static_cast<float>(n(rng));
  return c;
}

// Direct evaluation of the calibration objective.
double direct_error(const Linear& a, const Linear& b, const CalibrationSet& c) {
  double total = 0;
  for (int s = 0; s < c.count(); ++s)
    for (int o = 0; o < a.out_dim; ++o) {
      double d = 0;
      for (int k = 0; k < a.in_dim; ++k)
        d += (double(b.weight[o * a.in_dim + k]) - double(a.weight[o * a.in_dim + k])) * c.sample(s)[k];
      total += d * d;
    }
  return total;
}

}  // namespace

TEST(Quantizer, DequantizeIsScaleTimesHalf) {
  EXPECT_EQ(dequantize(float_to_half_bits(1.5f), 0.25f), 0.375f);
  EXPECT_EQ(dequantize(0, 3.0f), 0.0f);
  EXPECT_EQ(dequantize(float_to_half_bits(-2.0f), 0.5f), -1.0f);
}

TEST(Quantizer, StoredWeightsAreDequantizedHalves) {
  const auto layer = random_linear(12, 9, 1);
  const auto q = quantize_layer(layer, random_calib(12, 64, 2));
  ASSERT_TRUE(q.quantized());
  ASSERT_EQ(q.scale.size(), 9u);
  for (int o = 0; o < 9; ++o)
    for (int k = 0; k < 12; ++k) {
      const std::size_t i = o * 12 + k;
      EXPECT_EQ(q.weight[i], dequantize(q.half_weight[i], q.scale[o]));
    }
  EXPECT_EQ(q.bias, layer.bias);
}

TEST(Quantizer, CalibrationErrorMatchesDirectSum) {
  const auto layer = random_linear(10, 6, 3);
  const auto calib = random_calib(10, 40, 4);
  const auto q = quantize_layer(layer, calib);
  EXPECT_NEAR(calibration_error(layer, q, calib), direct_error(layer, q, calib),
              1e-9 * std::max(1e-20, direct_error(layer, q, calib)));
  EXPECT_EQ(calibration_error(layer, layer, calib), 0.0);
}

TEST(Quantizer, PerChannelNeverWorseThanPerTensor) {
  for (int trial = 0; trial < 12; ++trial) {
    const auto layer = random_linear(8 + trial, 4 + trial, 100 + trial, 0.5 * (trial % 4));
    const auto calib = random_calib(8 + trial, 32, 200 + trial);
    const auto pc = quantize_layer(layer, calib, ScaleMode::per_channel);
    const auto pt = quantize_layer(layer, calib, ScaleMode::per_tensor);
    EXPECT_LE(calibration_error(layer, pc, calib), calibration_error(layer, pt, calib));
    // per-tensor means one shared scale
    for (float s : pt.scale) EXPECT_EQ(s, pt.scale[0]);
  }
}

TEST(Quantizer, PerChannelWinsWhenRowsSpanDecades) {
  // fp16 error is relative, so the gain comes from subnormal rows and from the
  // per-row choice of rounding grid.
  const auto layer = random_linear(32, 16, 7, 3.0);
  const auto calib = random_calib(32, 64, 8);
  const double pc = calibration_error(layer, quantize_layer(layer, calib, ScaleMode::per_channel), calib);
  const double pt = calibration_error(layer, quantize_layer(layer, calib, ScaleMode::per_tensor), calib);
  std::printf("per-tensor / per-channel error ratio: %.3g\n", pt / pc);
  EXPECT_LT(pc, pt);
}

TEST(Quantizer, ExtremeChannelPairPrefersPerChannel) {
  Linear layer(4, 2);
  const float row0[4] = {1.0e3f, -7.3e2f, 4.1e2f, 9.9e2f};
  const float row1[4] = {1.0e-3f, -3.3e-4f, 6.1e-4f, -8.7e-4f};
  for (int k = 0; k < 4; ++k) {
    layer.weight[k] = row0[k];
    layer.weight[4 + k] = row1[k];
  }
  const auto calib = random_calib(4, 64, 12);
  const double pc = calibration_error(layer, quantize_layer(layer, calib, ScaleMode::per_channel), calib);
  const double pt = calibration_error(layer, quantize_layer(layer, calib, ScaleMode::per_tensor), calib);
  EXPECT_LT(pc, pt);
}

TEST(Quantizer, LogUniformChannelsTenfoldGain) {
  // Channel magnitudes log-uniform over three decades; the per-channel output
  // error should be at least ten times below per-tensor.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> decade(-3.0, 0.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Linear layer(64, 64);
  for (int o = 0; o < 64; ++o) {
    const double mag = std::pow(10.0, decade(rng));
    for (int k = 0; k < 64; ++k) layer.weight[o * 64 + k] = static_cast<float>(mag * g(rng));
  }
  const auto calib = random_calib(64, 256, 32);
  const double pc = calibration_error(layer, quantize_layer(layer, calib, ScaleMode::per_channel), calib);
  const double pt = calibration_error(layer, quantize_layer(layer, calib, ScaleMode::per_tensor), calib);
  std::printf("log-uniform channels: per-tensor / per-channel error ratio %.3g\n", pt / pc);
  EXPECT_GE(pt / pc, 10.0);
}

TEST(Quantizer, ZeroRowsAndIdempotence) {
  auto layer = random_linear(6, 4, 9);
  for (int k = 0; k < 6; ++k) layer.weight[2 * 6 + k] = 0.0f;
  const auto calib = random_calib(6, 16, 10);
  const auto q = quantize_layer(layer, calib);
  EXPECT_EQ(q.scale[2], 1.0f);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(q.weight[2 * 6 + k], 0.0f);
  // quantizing the dequantized weights again changes nothing
  Linear again_in = q;
  again_in.precision = Precision::fp32;
  again_in.half_weight.clear();
  again_in.scale.clear();
  const auto q2 = quantize_layer(again_in, calib);
  EXPECT_EQ(q2.weight, q.weight);
  EXPECT_EQ(calibration_error(again_in, q2, calib), 0.0);
}

TEST(Quantizer, QuantizedMlpForwardRoundsInputs) {
  const auto params = init_params(flashcg::testing::small_config(), 4);
  QuantizeOptions opts;
  opts.beads = 24;
  opts.states = 2;
  const auto qp = quantize_model(params, opts);
  const auto& mlp = qp.readout;
  std::vector<float> x(mlp.in_dim());
  for (int i = 0; i < mlp.in_dim(); ++i) x[i] = 0.1234567f * (i - 3);
  const auto y = quantized_mlp_forward(mlp, x);
  // oracle: round input to fp16, dense in double, ssp, round, dense
  const auto& l0 = mlp.layers[0];
  const auto& l1 = mlp.layers[1];
  std::vector<double> h(l0.out_dim);
  for (int o = 0; o < l0.out_dim; ++o) {
    double s = l0.bias[o];
    for (int k = 0; k < l0.in_dim; ++k) s += double(l0.weight[o * l0.in_dim + k]) * round_to_half(x[k]);
    h[o] = round_to_half(static_cast<float>(shifted_softplus(s)));
  }
  double out = l1.bias[0];
  for (int k = 0; k < l1.in_dim; ++k) out += double(l1.weight[k]) * h[k];
  EXPECT_NEAR(y[0], out, 1e-4 * std::max(1.0, std::abs(out)));
}

TEST(Quantizer, ModelQuantizationReportsEveryLayerAndRoundTrips) {
  const auto cfg = flashcg::testing::small_config(2);
  const auto params = init_params(cfg, 12);
  QuantizeOptions opts;
  opts.beads = 32;
  opts.states = 2;
  std::vector<LayerQuantReport> report;
  const auto qp = quantize_model(params, opts, &report);
  EXPECT_TRUE(qp.quantized());
  EXPECT_EQ(report.size(), static_cast<std::size_t>(cfg.num_blocks * 5 + 2));
  for (const auto& r : report) EXPECT_LE(r.per_channel_error, r.per_tensor_error) << r.name;
  EXPECT_EQ(qp.embedding, params.embedding);

  const auto path = flashcg::testing::temp_path("quantized.flcg");
  save_params(path, qp);
  const auto back = load_params(path);
  ASSERT_TRUE(back.quantized());
  for_each_linear(back, [&](const std::string&, const Linear& l) { EXPECT_TRUE(l.quantized()); });
  EXPECT_EQ(back.blocks[1].filter.layers[0].half_weight, qp.blocks[1].filter.layers[0].half_weight);
  EXPECT_EQ(back.blocks[1].filter.layers[0].weight, qp.blocks[1].filter.layers[0].weight);

  // already-quantized layers pass through untouched
  std::vector<LayerQuantReport> again;
  const auto qq = quantize_model(qp, opts, &again);
  EXPECT_EQ(qq.readout.layers[0].half_weight, qp.readout.layers[0].half_weight);

  // quant mode evaluates and stays close to full precision
  const auto x = random_cloud(40, 1.6, 0.1, 3);
  const auto types = flashcg::testing::random_types(40, cfg.num_atom_types, 3);
  auto q = BackendOptions::flash();
  q.quant = true;
  const auto full = flash_energy_forces(Model<float>::from_params(params), convert_positions<float>(x), types,
                                        BackendOptions::flash());
  const auto quant = flash_energy_forces(Model<float>::from_params(qp), convert_positions<float>(x), types, q);
  EXPECT_LE(std::abs(quant.energy - full.energy) / std::abs(full.energy), 1e-2);
}
