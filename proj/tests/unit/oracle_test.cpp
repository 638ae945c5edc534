// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "spx/oracle.hpp"
#include "test_support.hpp"

namespace spx::oracle {
namespace {

TEST(NaiveGemm, IdentityAndScalar) {
  Matrix<double> a(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  Matrix<double> eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1;
  EXPECT_EQ(naive_gemm_f64(a, eye), a);
  EXPECT_EQ(naive_gemm_f64(Matrix<double>(1, 1, 3.0), Matrix<double>(1, 1, -2.5))(0, 0), -7.5);
  SPX_EXPECT_ERRC(naive_gemm_f64(a, a), Errc::kDimensionMismatch);
}

TEST(IntGemm, SmallCase) {
  Matrix<std::int8_t> a(1, 2, std::vector<std::int8_t>{127, -127});
  Matrix<std::int8_t> b(2, 1, std::vector<std::int8_t>{127, 127});
  EXPECT_EQ(int_gemm(a, b)(0, 0), 0);
  b(1, 0) = -127;
  EXPECT_EQ(int_gemm(a, b)(0, 0), 2 * 127 * 127);
}

TEST(ScalarExpand, Examples) {
  const bf16 a = bf16::from_float(1.0f);
  const bf16 b = bf16::from_float(2.0f);
  const std::vector<bf16> values{a, b};
  const std::vector<std::uint32_t> w{0x5};
  const auto r = scalar_expand(w, values, 0);
  EXPECT_EQ(r.cursor, 2u);
  EXPECT_EQ(r.elements[0], a);
  EXPECT_EQ(r.elements[1], bf16{});
  EXPECT_EQ(r.elements[2], b);
  const std::vector<std::uint32_t> zeros{0, 0};
  EXPECT_EQ(scalar_expand(zeros, values, 1).cursor, 1u);
  const std::vector<std::uint32_t> ones{0xffffffffu};
  SPX_EXPECT_ERRC(scalar_expand(ones, values, 0), Errc::kExhaustedValues);
}

TEST(ScalarHelpers, PopcountAndPrefix) {
  EXPECT_EQ(scalar_popcount(0), 0u);
  EXPECT_EQ(scalar_popcount(0xffffffffu), 32u);
  EXPECT_EQ(scalar_popcount(0x80000001u), 2u);
  std::array<std::uint32_t, 16> v{};
  v.fill(2);
  EXPECT_EQ(scalar_prefix_sum(v)[15], 32u);
  const std::vector<std::uint32_t> bitmap{0xffu, 0x1u};
  const std::vector<std::size_t> offsets{0, 4, 32, 33};
  EXPECT_EQ(scalar_cursor_scan(bitmap, offsets), (std::vector<std::uint32_t>{0, 4, 8, 9}));
}

TEST(NaiveAttention, SingletonAndUniform) {
  Matrix<double> q(2, 2, std::vector<double>{1, 0, 0, 1});
  const std::vector<Matrix<double>> k1{Matrix<double>(1, 2, std::vector<double>{3, 4})};
  const std::vector<Matrix<double>> v1{Matrix<double>(1, 2, std::vector<double>{5, 6})};
  const auto single = naive_attention(q, k1, v1, 1.0);
  EXPECT_EQ(single(0, 0), 5.0);
  EXPECT_EQ(single(1, 1), 6.0);
  // Identical keys give uniform scores, so the output is the mean value row.
  const std::vector<Matrix<double>> k3{Matrix<double>(3, 2, 1.0)};
  const std::vector<Matrix<double>> v3{Matrix<double>(3, 2, std::vector<double>{1, 2, 3, 4, 5, 9})};
  Matrix<double> probs;
  const auto uniform = naive_attention(q, k3, v3, 0.5, &probs);
  EXPECT_NEAR(uniform(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(uniform(1, 1), 5.0, 1e-12);
  EXPECT_NEAR(probs(0, 2), 1.0 / 3.0, 1e-15);
}

TEST(PruneBySort, Examples) {
  const std::vector<float> x{3.0f, -1.0f, 0.5f, 2.0f};
  EXPECT_EQ(prune_by_sort<float>(x, 0.5), (std::vector<float>{3.0f, 0.0f, 0.0f, 2.0f}));
  const std::vector<float> ties{2.0f, 2.0f, 2.0f};
  EXPECT_EQ(prune_by_sort<float>(ties, 0.3), (std::vector<float>{2.0f, 2.0f, 2.0f}));
  EXPECT_EQ(prune_by_sort<float>(ties, 0.34), (std::vector<float>{2.0f, 2.0f, 0.0f}));
  EXPECT_EQ(prune_by_sort<float>(ties, 0.67), (std::vector<float>{2.0f, 0.0f, 0.0f}));
}

TEST(GemmRelativeError, AgreesWithMaterializedOracle) {
  testing::Rng rng(7);
  const auto a = testing::random_bf16(3, 40, rng);
  const auto b = testing::random_bf16(40, 9, rng);
  const auto ref = naive_gemm_f64(widen(a), widen(b));
  const auto scale = abs_gemm_f64(widen(a), widen(b));
  Matrix<float> c(3, 9);
  for (std::size_t i = 0; i < c.size(); ++i) c.flat()[i] = static_cast<float>(ref.flat()[i]);
  c(1, 4) += 0.01f;
  EXPECT_DOUBLE_EQ(gemm_relative_error(a, b, c), testing::max_relative_error(c, ref, scale));
  EXPECT_GT(gemm_relative_error(a, b, c), 0.0);
}

TEST(GemmRelativeError, ZeroScaleMustBeExact) {
  Matrix<bf16> a(1, 2);
  Matrix<bf16> b(2, 1);
  Matrix<float> c(1, 1);
  EXPECT_EQ(gemm_relative_error(a, b, c), 0.0);
  c(0, 0) = 1e-30f;
  EXPECT_TRUE(std::isinf(gemm_relative_error(a, b, c)));
}

TEST(AttentionRelativeError, ZeroForOracleOutput) {
  testing::Rng rng(11);
  const auto q = widen(testing::random_f32(4, 8, rng));
  std::vector<Matrix<double>> k{widen(testing::random_f32(5, 8, rng)), widen(testing::random_f32(5, 8, rng))};
  std::vector<Matrix<double>> v{widen(testing::random_f32(5, 8, rng)), widen(testing::random_f32(5, 8, rng))};
  const auto ref = naive_attention(q, k, v, 0.5);
  Matrix<float> out(4, 8);
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] = static_cast<float>(ref.flat()[i]);
  EXPECT_LT(attention_relative_error(q, k, v, 0.5, out), 1e-6);
  out(3, 7) += 0.25f;
  EXPECT_GT(attention_relative_error(q, k, v, 0.5, out), 1e-2);
}

}  // namespace
}  // namespace spx::oracle
