// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spx/bf16.hpp"
#include "spx/kernel.hpp"
#include "spx/matrix.hpp"
#include "spx/sparse_format.hpp"

namespace spx {

/// Number of entries magnitude pruning drops: floor(sparsity * count), with
/// a relative tolerance of 1e-12 so that e.g. 0.29 * 100 gives 29.
std::size_t pruned_count(std::size_t count, double sparsity);

/// Zeroes the pruned_count(x.size(), sparsity) entries of smallest |value|.
/// Among equal magnitudes the higher flat index is dropped first. Throws
/// kInvalidArgument unless 0 <= sparsity <= 1.
template <class T>
void magnitude_prune_inplace(std::span<T> x, double sparsity);

template <class T>
Matrix<T> magnitude_prune(Matrix<T> x, double sparsity) {
  magnitude_prune_inplace<T>(x.flat(), sparsity);
  return x;
}

/// Joint pruning over several tensors treated as one flat sequence (in the
/// order given); used to prune a layer's K (or V) across all of its heads.
template <class T>
void magnitude_prune_jointly(std::span<Matrix<T>* const> tensors, double sparsity);

/// Prefill K and V of one layer: one tokens x head_dim matrix per KV head.
struct LayerKV {
  std::vector<Matrix<float>> k;
  std::vector<Matrix<float>> v;
};

/// Compressed cache of all layers.
///
/// Per layer and KV head: a static part packed once after prefill (K
/// transposed to head_dim x n_static, so q . K is a plain GEMM, and V as
/// n_static x head_dim) followed by dense BF16 tails for tokens appended
/// during decode. The static part never changes after packing.
class SparseKVCache {
 public:
  struct HeadCache {
    std::optional<PackedSparseTensor> k_static;  // absent when n_static == 0
    std::optional<PackedSparseTensor> v_static;
    std::vector<bf16> k_tail;                    // n_tail x head_dim, row-major
    std::vector<bf16> v_tail;
  };

  SparseKVCache() = default;
  SparseKVCache(std::size_t layers, std::size_t n_heads, std::size_t n_kv_heads, std::size_t head_dim,
                std::size_t n_static);

  std::size_t layers() const noexcept { return layers_; }
  std::size_t n_heads() const noexcept { return n_heads_; }
  std::size_t n_kv_heads() const noexcept { return n_kv_heads_; }
  std::size_t group_size() const noexcept { return n_heads_ / n_kv_heads_; }
  std::size_t head_dim() const noexcept { return head_dim_; }
  std::size_t n_static() const noexcept { return n_static_; }
  std::size_t n_tail(std::size_t layer) const { return n_tail_.at(layer); }
  std::size_t context(std::size_t layer) const { return n_static_ + n_tail(layer); }

  const HeadCache& head(std::size_t layer, std::size_t kv_head) const;
  HeadCache& head(std::size_t layer, std::size_t kv_head);

  /// Appends one token for every KV head of `layer`; k and v hold
  /// n_kv_heads x head_dim values, head-major. Only the tails change.
  void append_token(std::size_t layer, std::span<const float> k, std::span<const float> v);

  /// Compressed bytes of the static part plus dense tail bytes.
  std::size_t static_bytes() const;
  std::size_t tail_bytes() const;

 private:
  friend SparseKVCache load_cache(const std::filesystem::path& dir);

  std::size_t layers_ = 0;
  std::size_t n_heads_ = 0;
  std::size_t n_kv_heads_ = 0;
  std::size_t head_dim_ = 0;
  std::size_t n_static_ = 0;
  std::vector<std::size_t> n_tail_;
  std::vector<HeadCache> heads_;
};

/// Rounds prefill K/V to BF16, prunes each layer's K and V separately at the
/// given rates (jointly over the layer's heads) and packs every head.
/// Throws kInvalidArgument for inconsistent shapes or n_heads % n_kv_heads != 0.
SparseKVCache pack_kv(std::span<const LayerKV> layers, std::size_t n_heads, double k_sparsity, double v_sparsity);

/// Numerically stable softmax in place: FP32 exponentials of x - max,
/// normalizer accumulated in FP64.
void softmax_inplace(std::span<float> x);

/// Single-token decode attention for one layer. q is n_heads x head_dim;
/// returns n_heads x head_dim. Query heads sharing a KV head are batched as
/// rows of one GEMM against that head's packed K and V; nothing is
/// repeated. If `probabilities` is given it receives the n_heads x context
/// softmax output. Throws kNoContext when the layer holds no tokens.
Matrix<float> sparse_attention(const Matrix<float>& q, const SparseKVCache& cache, std::size_t layer,
                               Matrix<float>* probabilities = nullptr, Backend backend = default_backend());

/// Directory with one .spx per static tensor, RAW1 files for non-empty
/// tails and a manifest.json naming each file's layer, head and role.
void save_cache(const SparseKVCache& cache, const std::filesystem::path& dir);
SparseKVCache load_cache(const std::filesystem::path& dir);

extern template void magnitude_prune_inplace<float>(std::span<float>, double);
extern template void magnitude_prune_inplace<bf16>(std::span<bf16>, double);
extern template void magnitude_prune_inplace<std::int8_t>(std::span<std::int8_t>, double);
extern template void magnitude_prune_jointly<float>(std::span<Matrix<float>* const>, double);
extern template void magnitude_prune_jointly<bf16>(std::span<Matrix<bf16>* const>, double);

}  // namespace spx
