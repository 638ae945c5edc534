// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "spx/int8.hpp"
#include "spx/packed_io.hpp"
#include "test_support.hpp"

namespace spx {
namespace {

using testing::Rng;

TEST(Quantize, Examples) {
  for (float s : {0.1f, 1.0f, 7.5f}) {
    EXPECT_EQ(quantize(0.0f, s), 0);
    EXPECT_EQ(quantize(s, s), 1);
    EXPECT_EQ(quantize(-s, s), -1);
  }
  EXPECT_EQ(quantize(2.5f, 1.0f), 3);
  EXPECT_EQ(quantize(-2.5f, 1.0f), -3);
  EXPECT_EQ(quantize(1000.0f, 1.0f), 127);
  EXPECT_EQ(quantize(-1000.0f, 1.0f), -127);
  SPX_EXPECT_ERRC(quantize(std::numeric_limits<float>::infinity(), 1.0f), Errc::kInvalidArgument);
  SPX_EXPECT_ERRC(quantize(std::nanf(""), 1.0f), Errc::kInvalidArgument);
  SPX_EXPECT_ERRC(quantize(1.0f, 0.0f), Errc::kInvalidArgument);
}

TEST(Quantize, RoundTripWithinHalfScale) {
  Rng rng(61);
  const auto x = testing::random_f32(1, 5000, rng, -3.0f, 3.0f);
  const float scale = symmetric_scale(x.flat());
  const auto q = quantize(x.flat(), scale);
  for (std::size_t i = 0; i < q.size(); ++i) {
    ASSERT_LE(std::fabs(dequantize(q[i], scale) - x.flat()[i]), scale / 2 * (1 + 1e-6f));
  }
}

TEST(ChooseScales, Examples) {
  Matrix<float> w(3, 3);
  w(0, 0) = 127.0f;
  w(1, 0) = -3.0f;
  w(2, 1) = -0.5f;
  const auto p = choose_scales(w);
  EXPECT_EQ(p.weight_scales[0], 1.0f);
  EXPECT_EQ(p.weight_scales[2], 1.0f);  // all-zero column
  const auto q = quantize_weights(w, p);
  EXPECT_EQ(q(0, 0), 127);
  EXPECT_EQ(q(2, 1), -127);
  EXPECT_EQ(q(0, 2), 0);
  Rng rng(62);
  const auto r = testing::random_f32(50, 20, rng);
  const auto rq = quantize_weights(r, choose_scales(r));
  for (std::size_t n = 0; n < 20; ++n) {
    int peak = 0;
    for (std::size_t k = 0; k < 50; ++k) peak = std::max(peak, std::abs(int{rq(k, n)}));
    EXPECT_EQ(peak, 127);
  }
}

class Int8Gemm : public ::testing::TestWithParam<Backend> {};

TEST_P(Int8Gemm, AccumulatorsMatchIntegerOracle) {
  Rng rng(63);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 64, 32}, {3, 200, 70}, {40, 128, 64},
                         {2, 4096, 48}}) {
    for (double s : {0.0, 0.5, 0.9, 1.0}) {
      const auto x = testing::random_int8(m, k, rng);
      auto w = testing::random_int8(k, n, rng);
      testing::drop_random(w, s, rng);
      const auto packed = pack_weights(w, TileLayout::int8_tiles(), 1);
      const auto plan = GemmPlan::for_weights(m, packed, 2, GetParam());
      const auto sparse = int8_sparse_accumulate(x, packed, plan);
      const auto dense = int8_dense_accumulate(
          x, reorder_dense(unpack_weights<std::int8_t>(packed), TileLayout::int8_tiles()), plan);
      ASSERT_EQ(sparse, dense);
      const auto ref = oracle::int_gemm(x, w);
      for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(std::int64_t{sparse.flat()[i]}, ref.flat()[i]);
    }
  }
}

TEST_P(Int8Gemm, IdentityWithUnitScales) {
  Rng rng(64);
  const auto x = testing::random_int8(2, 70, rng);
  Matrix<std::int8_t> eye(70, 70);
  for (std::size_t i = 0; i < 70; ++i) eye(i, i) = 1;
  QuantParams p;
  p.weight_scales.assign(70, 1.0f);
  const auto packed = pack_weights(eye, TileLayout::int8_tiles(), 1);
  const auto out = int8_sparse_gemm(x, packed, p, GemmPlan::for_weights(2, packed, 1, GetParam()));
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(out.flat()[i], static_cast<float>(x.flat()[i]));
}

TEST_P(Int8Gemm, DequantizedOutputMatchesFp64) {
  Rng rng(65);
  const auto xf = testing::random_f32(3, 256, rng);
  const auto wf = testing::random_f32(256, 96, rng);
  QuantParams p = choose_scales(wf);
  const auto qw = quantize_weights(wf, p);
  const auto qx = quantize_activations(xf);
  p.activation_scale = qx.scale;
  const auto tiled = reorder_dense(qw, TileLayout::int8_tiles());
  const auto out = int8_dense_gemm(qx.values, tiled, p, GemmPlan::create(3, 256, 96, 2, TileLayout::int8_tiles(), GetParam()));
  const auto acc = oracle::int_gemm(qx.values, qw);
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t n = 0; n < 96; ++n) {
      const double ref = static_cast<double>(acc(m, n)) * qx.scale * p.weight_scales[n];
      // Integer core exact; only float(acc) (exact here, |acc| < 2^24) and two multiplies round.
      const float expected = (static_cast<float>(acc(m, n)) * qx.scale) * p.weight_scales[n];
      ASSERT_EQ(out(m, n), expected);
      ASSERT_LE(std::fabs(out(m, n) - ref), std::fabs(ref) * std::ldexp(1.0, -22));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Backends, Int8Gemm, ::testing::ValuesIn(testing::backends()),
                         [](const auto& info) { return testing::name(info.param); });

TEST(Int8Gemm, InnerDimensionBound) {
  const std::size_t k = 131072;  // (2^31 - 1) / 128^2 + 1
  const auto plan = GemmPlan::create(1, k, 16, 1, TileLayout::int8_tiles(), Backend::kPortable);
  Matrix<std::int8_t> x(1, k);
  const auto tiled = reorder_dense(Matrix<std::int8_t>(k, 16), TileLayout::int8_tiles());
  SPX_EXPECT_ERRC(int8_dense_accumulate(x, tiled, plan), Errc::kInvalidArgument);
}

TEST(Int8Gemm, LargestInnerDimensionIsExactAtMinus128) {
  const std::size_t k = 131071;
  Matrix<std::int8_t> x(1, k);
  Matrix<std::int8_t> w(k, 16);
  for (auto& v : x.flat()) v = -128;
  for (auto& v : w.flat()) v = -128;
  const auto acc = int8_dense_accumulate(x, reorder_dense(w, TileLayout::int8_tiles()),
                                         GemmPlan::create(1, k, 16, 1, TileLayout::int8_tiles(), Backend::kPortable));
  for (std::int32_t a : acc.flat()) EXPECT_EQ(a, 2147467264);
}

TEST(QuantSection, RoundTripAfterPackedTensor) {
  Rng rng(66);
  auto w = testing::random_int8(64, 40, rng);
  const auto packed = pack_weights(w, TileLayout::int8_tiles(), 1);
  QuantParams p;
  p.weight_scales = {0.5f, 0.25f, 3.0f};
  p.activation_scale = 0.125f;
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  save_packed(packed, ss);
  save_quant_section(p, ss);
  EXPECT_EQ(load_packed(ss), packed);
  const auto back = load_quant_section(ss);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(*back, p);
  EXPECT_FALSE(load_quant_section(ss).has_value());
}

TEST(QuantSection, MalformedTrailers) {
  std::stringstream empty;
  EXPECT_FALSE(load_quant_section(empty).has_value());
  std::stringstream junk("JUNKJUNK");
  SPX_EXPECT_ERRC(load_quant_section(junk), Errc::kBadMagic);
  std::stringstream full(std::ios::in | std::ios::out | std::ios::binary);
  QuantParams p;
  p.weight_scales = {1.0f, 2.0f};
  save_quant_section(p, full);
  const std::string bytes = full.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 2));
  SPX_EXPECT_ERRC(load_quant_section(cut), Errc::kTruncated);
}

}  // namespace
}  // namespace spx
