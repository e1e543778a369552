#include <gtest/gtest.h>

#include <random>

#include "flashcg/half.hpp"
#include "flashcg/kernels.hpp"
#include "test_util.hpp"

using namespace flashcg;

namespace {

template <class T>
DenseLayer<T> random_layer(int in, int out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Linear l(in, out);
  for (auto& w : l.weight) w = static_cast<float>(u(rng));
  for (auto& b : l.bias) b = static_cast<float>(u(rng));
  return DenseLayer<T>::from(l);
}

template <class T>
Matrix<T> random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix<T> m(rows, cols);
  for (auto& v : m.data) v = static_cast<T>(u(rng));
  return m;
}

template <class T>
void expect_bit_equal(const Matrix<T>& a, const Matrix<T>& b) {
  ASSERT_EQ(a.rows, b.rows);
  ASSERT_EQ(a.cols, b.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) ASSERT_EQ(a.data[i], b.data[i]) << "element " << i;
}

template <class T>
class TileKernels : public ::testing::Test {};
using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(TileKernels, Precisions);

}  // namespace

// Shapes chosen to hit every remainder path: outputs not a multiple of the
// register block, items not a multiple of the vector width, tiles larger
// than the row count.
TYPED_TEST(TileKernels, ForwardBitEqualToRowPrimitive) {
  using T = TypeParam;
  int seed = 0;
  for (int in : {1, 3, 8, 17}) {
    for (int out : {1, 5, 16, 33}) {
      for (Index rows : {1, 7, 64, 131}) {
        for (int tile : {1, 4, 16, 128}) {
          const auto layer = random_layer<T>(in, out, ++seed);
          const auto x = random_matrix<T>(rows, in, seed * 31);
          Matrix<T> a(rows, out), b(rows, out);
          dense_rows(layer, x, a);
          dense_rows_tiled(layer, x, b, tile);
          expect_bit_equal(a, b);
        }
      }
    }
  }
}

TYPED_TEST(TileKernels, BackwardBitEqualToRowPrimitive) {
  using T = TypeParam;
  int seed = 1000;
  for (int in : {2, 9, 16}) {
    for (int out : {1, 6, 32, 35}) {
      for (Index rows : {1, 13, 100}) {
        for (int tile : {3, 32, 256}) {
          const auto layer = random_layer<T>(in, out, ++seed);
          const auto g = random_matrix<T>(rows, out, seed * 17);
          Matrix<T> a(rows, in), b(rows, in);
          dense_rows_backward(layer, g, a);
          dense_rows_backward_tiled(layer, g, b, tile);
          expect_bit_equal(a, b);
        }
      }
    }
  }
}

TYPED_TEST(TileKernels, MlpTiledEqualsRowwiseWithTrafficCounted) {
  using T = TypeParam;
  const auto params = init_params(flashcg::testing::small_config(), 5);
  const auto mlp = MlpT<T>::from(params.blocks[0].filter);
  const auto x = random_matrix<T>(77, mlp.in_dim(), 9);
  RowsMlpCache<T> c0, c1;
  TrafficReport t0, t1;
  const auto a = mlp_rows_forward(mlp, x, 0, &c0, &t0, Stage::filter, sizeof(T));
  const auto b = mlp_rows_forward(mlp, x, 32, &c1, &t1, Stage::filter, sizeof(T));
  expect_bit_equal(a, b);
  EXPECT_EQ(t0, t1);
  // two layers plus one activation: reads = 77 (Dr + H + H), writes = 77 (H + H + D)
  const auto H = mlp.layers[0].out_dim;
  const auto D = mlp.out_dim();
  EXPECT_EQ(t0.at(Stage::filter).read,
            std::int64_t(77) * (mlp.in_dim() + H + H) * std::int64_t(sizeof(T)));
  EXPECT_EQ(t0.at(Stage::filter).write, std::int64_t(77) * (H + H + D) * std::int64_t(sizeof(T)));

  const auto g = random_matrix<T>(77, D, 4);
  const auto ga = mlp_rows_backward(mlp, c0, g, 0, nullptr, Stage::filter, sizeof(T));
  const auto gb = mlp_rows_backward(mlp, c1, g, 32, nullptr, Stage::filter, sizeof(T));
  expect_bit_equal(ga, gb);
}

TEST(TileKernels, HalfInputRoundsBeforeProduct) {
  auto layer = random_layer<float>(4, 3, 77);
  layer.half_input = true;
  Matrix<float> x(2, 4);
  x.data = {0.1f, 0.2f, 1.0001f, -3.3333f, 7.77777f, 0.0f, -1e-5f, 2.5f};
  Matrix<float> rounded = x;
  for (auto& v : rounded.data) v = round_to_half(v);
  layer.half_input = false;
  Matrix<float> expect(2, 3);
  dense_rows(layer, rounded, expect);
  layer.half_input = true;
  Matrix<float> got(2, 3);
  dense_rows_tiled(layer, x, got, 8);
  expect_bit_equal(expect, got);
}

TEST(Half, RoundTripAndRounding) {
  EXPECT_EQ(float_to_half_bits(1.0f), 0x3C00);
  EXPECT_EQ(float_to_half_bits(-2.0f), 0xC000);
  EXPECT_EQ(float_to_half_bits(65504.0f), 0x7BFF);
  EXPECT_EQ(float_to_half_bits(1e6f), 0x7C00);  // overflow to inf
  EXPECT_EQ(half_bits_to_float(0x0001), std::ldexp(1.0f, -24));
  // ties to even: 1 + 2^-11 sits halfway between 1 and 1 + 2^-10
  EXPECT_EQ(round_to_half(1.0f + std::ldexp(1.0f, -11)), 1.0f);
  EXPECT_EQ(round_to_half(1.0f + 3 * std::ldexp(1.0f, -11)), 1.0f + std::ldexp(1.0f, -9));
  for (std::uint32_t b = 0; b < 0x7C00; ++b)
    ASSERT_EQ(float_to_half_bits(half_bits_to_float(static_cast<std::uint16_t>(b))), b);
}
