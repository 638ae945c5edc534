// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "spx/attention.hpp"
#include "spx/packed_io.hpp"
#include "test_support.hpp"

namespace spx {
namespace {

using testing::Rng;

TEST(Prune, Examples) {
  std::vector<float> x{3.0f, -1.0f, 0.5f, 2.0f};
  magnitude_prune_inplace<float>(x, 0.5);
  EXPECT_EQ(x, (std::vector<float>{3.0f, 0.0f, 0.0f, 2.0f}));
  std::vector<float> y{1.0f, -2.0f, 3.0f};
  magnitude_prune_inplace<float>(y, 0.0);
  EXPECT_EQ(y, (std::vector<float>{1.0f, -2.0f, 3.0f}));
  magnitude_prune_inplace<float>(y, 1.0);
  EXPECT_EQ(y, (std::vector<float>{0.0f, 0.0f, 0.0f}));
  SPX_EXPECT_ERRC(magnitude_prune_inplace<float>(y, 1.5), Errc::kInvalidArgument);
}

TEST(Prune, TiesKeepLowerIndex) {
  std::vector<float> x{1.0f, -1.0f, 1.0f, 5.0f};
  magnitude_prune_inplace<float>(x, 0.5);
  EXPECT_EQ(x, (std::vector<float>{1.0f, 0.0f, 0.0f, 5.0f}));
}

TEST(Prune, CountUsesFloor) {
  EXPECT_EQ(pruned_count(10, 0.3), 3u);
  EXPECT_EQ(pruned_count(100, 0.29), 29u);
  EXPECT_EQ(pruned_count(7, 0.5), 3u);
  EXPECT_EQ(pruned_count(7, 1.0), 7u);
}

TEST(Prune, MatchesSortOracle) {
  Rng rng(71);
  std::uniform_int_distribution<int> small(-4, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> x(1 + rng() % 300);
    // Low-resolution values force plenty of ties.
    for (auto& v : x) v = trial % 2 ? static_cast<float>(small(rng)) : std::uniform_real_distribution<float>(-1, 1)(rng);
    for (double s : {0.0, 0.3, 0.5, 1.0}) {
      auto got = x;
      magnitude_prune_inplace<float>(got, s);
      ASSERT_EQ(got, oracle::prune_by_sort<float>(x, s));
      const auto kept = static_cast<std::size_t>(std::count_if(got.begin(), got.end(), [](float v) { return v != 0; }));
      const auto nonzero = static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [](float v) { return v != 0; }));
      ASSERT_LE(kept, std::min(nonzero, x.size() - pruned_count(x.size(), s)));
    }
  }
}

LayerKV random_layer(std::size_t kv_heads, std::size_t tokens, std::size_t hd, Rng& rng) {
  LayerKV l;
  for (std::size_t g = 0; g < kv_heads; ++g) {
    l.k.push_back(testing::random_f32(tokens, hd, rng));
    l.v.push_back(testing::random_f32(tokens, hd, rng));
  }
  return l;
}

Matrix<double> bf16_rounded(const Matrix<float>& m) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = bf16::from_float(m.flat()[i]).to_float();
  return out;
}

TEST(PackKv, ZeroSparsityRoundTrips) {
  Rng rng(72);
  const std::vector<LayerKV> layers{random_layer(2, 40, 64, rng), random_layer(2, 40, 64, rng)};
  const auto cache = pack_kv(layers, 4, 0.0, 0.0);
  EXPECT_EQ(cache.n_static(), 40u);
  EXPECT_EQ(cache.group_size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t g = 0; g < 2; ++g) {
      const auto k = unpack_weights<bf16>(*cache.head(l, g).k_static);
      const auto v = unpack_weights<bf16>(*cache.head(l, g).v_static);
      ASSERT_EQ(k.rows(), 64u);
      for (std::size_t t = 0; t < 40; ++t) {
        for (std::size_t d = 0; d < 64; ++d) {
          ASSERT_EQ(k(d, t), bf16::from_float(layers[l].k[g](t, d)));
          ASSERT_EQ(v(t, d), bf16::from_float(layers[l].v[g](t, d)));
        }
      }
    }
  }
}

TEST(PackKv, FullSparsityIsEmpty) {
  Rng rng(73);
  const std::vector<LayerKV> layers{random_layer(1, 10, 32, rng)};
  const auto cache = pack_kv(layers, 1, 1.0, 1.0);
  EXPECT_EQ(cache.head(0, 0).k_static->nnz(), 0u);
  EXPECT_EQ(cache.head(0, 0).v_static->nnz(), 0u);
}

TEST(PackKv, NonZeroCountsFollowRates) {
  Rng rng(74);
  const std::vector<LayerKV> layers{random_layer(2, 37, 64, rng), random_layer(2, 37, 64, rng)};
  const auto cache = pack_kv(layers, 2, 0.3, 0.5);
  const std::size_t per_layer = 2 * 37 * 64;
  for (std::size_t l = 0; l < 2; ++l) {
    std::size_t k = 0, v = 0;
    for (std::size_t g = 0; g < 2; ++g) {
      k += cache.head(l, g).k_static->nnz();
      v += cache.head(l, g).v_static->nnz();
    }
    EXPECT_EQ(k, per_layer - pruned_count(per_layer, 0.3));
    EXPECT_EQ(v, per_layer - pruned_count(per_layer, 0.5));
    EXPECT_LE(std::fabs(static_cast<double>(k) - std::ceil(0.7 * per_layer)), 1.0);
  }
}

TEST(PackKv, RejectsUnevenGroups) {
  Rng rng(75);
  const std::vector<LayerKV> layers{random_layer(2, 4, 16, rng)};
  SPX_EXPECT_ERRC(pack_kv(layers, 3, 0, 0), Errc::kInvalidArgument);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  Rng rng(76);
  for (std::size_t n : {1, 17, 512, 16384}) {
    auto x = testing::random_f32(1, n, rng, -30.0f, 30.0f);
    auto y = x;
    for (auto& v : y.flat()) v += 1000.0f;
    softmax_inplace(x.flat());
    double sum = 0;
    for (float v : x.flat()) sum += v;
    EXPECT_NEAR(sum, 1.0, std::ldexp(1.0, -20)) << n;
  }
  std::vector<float> one{42.0f};
  softmax_inplace(one);
  EXPECT_EQ(one[0], 1.0f);
}

class Attention : public ::testing::TestWithParam<Backend> {};

struct Scenario {
  std::size_t heads, kv_heads, hd, ctx;
};

TEST_P(Attention, MatchesNaiveOracleAtZeroSparsity) {
  Rng rng(77);
  for (Scenario s : {Scenario{4, 2, 64, 1}, {4, 2, 64, 17}, {8, 8, 64, 512}, {8, 8, 128, 100}}) {
    const std::vector<LayerKV> layers{random_layer(s.kv_heads, s.ctx, s.hd, rng)};
    const auto cache = pack_kv(layers, s.heads, 0.0, 0.0);
    const auto q = testing::random_f32(s.heads, s.hd, rng);
    Matrix<float> probs;
    const auto out = sparse_attention(q, cache, 0, &probs, GetParam());
    std::vector<Matrix<double>> k, v;
    for (std::size_t g = 0; g < s.kv_heads; ++g) {
      k.push_back(bf16_rounded(layers[0].k[g]));
      v.push_back(bf16_rounded(layers[0].v[g]));
    }
    Matrix<double> ref_probs;
    const auto ref = oracle::naive_attention(bf16_rounded(q), k, v, 1.0 / std::sqrt(double(s.hd)), &ref_probs);
    for (std::size_t h = 0; h < s.heads; ++h) {
      double row = 0;
      for (std::size_t t = 0; t < s.ctx; ++t) row += probs(h, t);
      ASSERT_NEAR(row, 1.0, std::ldexp(1.0, -20));
      for (std::size_t d = 0; d < s.hd; ++d) {
        double scale = 0;
        for (std::size_t t = 0; t < s.ctx; ++t) scale += ref_probs(h, t) * std::fabs(v[h / (s.heads / s.kv_heads)](t, d));
        ASSERT_LE(std::fabs(out(h, d) - ref(h, d)), std::ldexp(scale, -8)) << h << "," << d;
      }
    }
  }
}

TEST_P(Attention, SingleTokenReturnsItsValue) {
  Rng rng(78);
  const std::vector<LayerKV> layers{random_layer(2, 1, 64, rng)};
  const auto cache = pack_kv(layers, 4, 0.0, 0.0);
  const auto out = sparse_attention(testing::random_f32(4, 64, rng), cache, 0, nullptr, GetParam());
  for (std::size_t h = 0; h < 4; ++h) {
    for (std::size_t d = 0; d < 64; ++d) ASSERT_EQ(out(h, d), bf16::from_float(layers[0].v[h / 2](0, d)).to_float());
  }
}

TEST_P(Attention, TailTokensMatchDenseOracle) {
  Rng rng(79);
  const std::vector<LayerKV> layers{random_layer(2, 1, 32, rng)};
  auto cache = pack_kv(layers, 4, 0.0, 0.0);
  const auto k_new = testing::random_f32(1, 64, rng);
  const auto v_new = testing::random_f32(1, 64, rng);
  cache.append_token(0, k_new.flat(), v_new.flat());
  EXPECT_EQ(cache.n_tail(0), 1u);
  const auto q = testing::random_f32(4, 32, rng);
  const auto out = sparse_attention(q, cache, 0, nullptr, GetParam());
  std::vector<Matrix<double>> k, v;
  for (std::size_t g = 0; g < 2; ++g) {
    Matrix<float> kk(2, 32), vv(2, 32);
    for (std::size_t d = 0; d < 32; ++d) {
      kk(0, d) = layers[0].k[g](0, d);
      vv(0, d) = layers[0].v[g](0, d);
      kk(1, d) = k_new(0, g * 32 + d);
      vv(1, d) = v_new(0, g * 32 + d);
    }
    k.push_back(bf16_rounded(kk));
    v.push_back(bf16_rounded(vv));
  }
  const auto ref = oracle::naive_attention(bf16_rounded(q), k, v, 1.0 / std::sqrt(32.0));
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out.flat()[i], ref.flat()[i], std::ldexp(1.0, -8));
}

TEST_P(Attention, TailOnlyCache) {
  Rng rng(80);
  std::vector<LayerKV> layers{LayerKV{{Matrix<float>(0, 16)}, {Matrix<float>(0, 16)}}};
  auto cache = pack_kv(layers, 2, 0.3, 0.5);
  const auto q = testing::random_f32(2, 16, rng);
  SPX_EXPECT_ERRC(sparse_attention(q, cache, 0, nullptr, GetParam()), Errc::kNoContext);
  const auto k = testing::random_f32(1, 16, rng);
  const auto v = testing::random_f32(1, 16, rng);
  cache.append_token(0, k.flat(), v.flat());
  const auto out = sparse_attention(q, cache, 0, nullptr, GetParam());
  for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(out(1, d), bf16::from_float(v(0, d)).to_float());
}

TEST_P(Attention, HeadPermutationPermutesOutputs) {
  Rng rng(81);
  const std::vector<LayerKV> layers{random_layer(4, 50, 64, rng)};
  // Unpruned: joint pruning breaks magnitude ties by flat index, which a
  // head permutation would change.
  const auto cache = pack_kv(layers, 4, 0.0, 0.0);
  const auto q = testing::random_f32(4, 64, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  // Permute KV heads together with their query heads (group size 1).
  std::vector<LayerKV> permuted_layers{LayerKV{}};
  Matrix<float> pq(4, 64);
  for (std::size_t i = 0; i < 4; ++i) {
    permuted_layers[0].k.push_back(layers[0].k[perm[i]]);
    permuted_layers[0].v.push_back(layers[0].v[perm[i]]);
    std::copy(q.row(perm[i]).begin(), q.row(perm[i]).end(), pq.row(i).begin());
  }
  const auto out = sparse_attention(q, cache, 0, nullptr, GetParam());
  const auto pout = sparse_attention(pq, pack_kv(permuted_layers, 4, 0.0, 0.0), 0, nullptr, GetParam());
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t d = 0; d < 64; ++d) ASSERT_EQ(pout(i, d), out(perm[i], d));
  }
}

INSTANTIATE_TEST_SUITE_P(Backends, Attention, ::testing::ValuesIn(testing::backends()),
                         [](const auto& info) { return testing::name(info.param); });

std::string static_bytes_of(const SparseKVCache& cache) {
  std::ostringstream os(std::ios::binary);
  for (std::size_t l = 0; l < cache.layers(); ++l) {
    for (std::size_t g = 0; g < cache.n_kv_heads(); ++g) {
      save_packed(*cache.head(l, g).k_static, os);
      save_packed(*cache.head(l, g).v_static, os);
    }
  }
  return os.str();
}

TEST(KvCache, AppendsLeaveStaticPacksUntouched) {
  Rng rng(82);
  const std::vector<LayerKV> layers{random_layer(2, 30, 32, rng)};
  auto cache = pack_kv(layers, 4, 0.3, 0.5);
  const std::string before = static_bytes_of(cache);
  const std::size_t static_size = cache.static_bytes();
  for (int i = 0; i < 1000; ++i) {
    const auto k = testing::random_f32(1, 64, rng);
    cache.append_token(0, k.flat(), k.flat());
  }
  EXPECT_EQ(cache.n_tail(0), 1000u);
  EXPECT_EQ(cache.context(0), 1030u);
  EXPECT_EQ(static_bytes_of(cache), before);
  EXPECT_EQ(cache.static_bytes(), static_size);
  EXPECT_EQ(cache.tail_bytes(), 2u * 2u * 1000u * 32u * 2u);
  const std::vector<float> wrong(10);
  SPX_EXPECT_ERRC(cache.append_token(0, wrong, wrong), Errc::kDimensionMismatch);
}

TEST(KvCache, SaveLoadRoundTrip) {
  Rng rng(83);
  const std::vector<LayerKV> layers{random_layer(2, 20, 32, rng), random_layer(2, 20, 32, rng)};
  auto cache = pack_kv(layers, 4, 0.3, 0.5);
  const auto k = testing::random_f32(1, 64, rng);
  cache.append_token(1, k.flat(), k.flat());
  const auto dir = std::filesystem::temp_directory_path() / "spx_kv_cache_test";
  std::filesystem::remove_all(dir);
  save_cache(cache, dir);
  const auto back = load_cache(dir);
  EXPECT_EQ(back.layers(), 2u);
  EXPECT_EQ(back.n_tail(0), 0u);
  EXPECT_EQ(back.n_tail(1), 1u);
  EXPECT_EQ(static_bytes_of(back), static_bytes_of(cache));
  EXPECT_EQ(back.head(1, 1).v_tail, cache.head(1, 1).v_tail);
  const auto q = testing::random_f32(4, 32, rng);
  EXPECT_TRUE(testing::bits_equal(sparse_attention(q, back, 1), sparse_attention(q, cache, 1)));
  std::filesystem::remove(dir / "l0_h1_v_static.spx");
  SPX_EXPECT_ERRC(load_cache(dir), Errc::kIo);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace spx
