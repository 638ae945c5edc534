// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/attention.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "spx/dense_io.hpp"
#include "spx/packed_io.hpp"

namespace spx {

std::size_t pruned_count(std::size_t count, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) raise(Errc::kInvalidArgument, "sparsity must lie in [0, 1]");
  const double exact = sparsity * static_cast<double>(count);
  const auto drop = static_cast<std::size_t>(std::floor(exact * (1.0 + 1e-12)));
  return std::min(drop, count);
}

namespace {

template <class T>
float magnitude(T v) {
  return std::fabs(to_float(v));
}

}  // namespace

template <class T>
void magnitude_prune_inplace(std::span<T> x, double sparsity) {
  const std::size_t drop = pruned_count(x.size(), sparsity);
  if (drop == 0) return;
  if (drop == x.size()) {
    std::fill(x.begin(), x.end(), T{});
    return;
  }
  // |x| is exact in FP32 for every supported element type.
  std::vector<float> mag(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mag[i] = magnitude(x[i]);
    if (std::isnan(mag[i])) raise(Errc::kInvalidArgument, "cannot prune NaN values");
  }
  const auto nth = mag.begin() + static_cast<std::ptrdiff_t>(drop - 1);
  std::nth_element(mag.begin(), nth, mag.end());
  const float threshold = *nth;
  std::size_t below = 0;
  for (T v : x) below += magnitude(v) < threshold ? 1 : 0;
  // Everything under the threshold goes; ties at it go highest index first.
  std::size_t ties = drop - below;
  for (std::size_t i = x.size(); i-- > 0;) {
    const float m = magnitude(x[i]);
    if (m < threshold) {
      x[i] = T{};
    } else if (m == threshold && ties > 0) {
      x[i] = T{};
      --ties;
    }
  }
}

template <class T>
void magnitude_prune_jointly(std::span<Matrix<T>* const> tensors, double sparsity) {
  std::size_t total = 0;
  for (const Matrix<T>* m : tensors) total += m->size();
  std::vector<T> flat;
  flat.reserve(total);
  for (const Matrix<T>* m : tensors) flat.insert(flat.end(), m->flat().begin(), m->flat().end());
  magnitude_prune_inplace<T>(std::span<T>(flat), sparsity);
  auto it = flat.begin();
  for (Matrix<T>* m : tensors) {
    std::copy_n(it, m->size(), m->flat().begin());
    it += static_cast<std::ptrdiff_t>(m->size());
  }
}

template void magnitude_prune_inplace<float>(std::span<float>, double);
template void magnitude_prune_inplace<bf16>(std::span<bf16>, double);
template void magnitude_prune_inplace<std::int8_t>(std::span<std::int8_t>, double);
template void magnitude_prune_jointly<float>(std::span<Matrix<float>* const>, double);
template void magnitude_prune_jointly<bf16>(std::span<Matrix<bf16>* const>, double);

// ---------------------------------------------------------------------------

SparseKVCache::SparseKVCache(std::size_t layers, std::size_t n_heads, std::size_t n_kv_heads, std::size_t head_dim,
                             std::size_t n_static)
    : layers_(layers),
      n_heads_(n_heads),
      n_kv_heads_(n_kv_heads),
      head_dim_(head_dim),
      n_static_(n_static),
      n_tail_(layers, 0),
      heads_(layers * n_kv_heads) {
  if (layers == 0 || n_heads == 0 || n_kv_heads == 0 || head_dim == 0) {
    raise(Errc::kInvalidArgument, "cache dimensions must be positive");
  }
  if (n_heads % n_kv_heads != 0) {
    raise(Errc::kInvalidArgument, std::to_string(n_heads) + " query heads do not split evenly over " +
                                      std::to_string(n_kv_heads) + " KV heads");
  }
}

const SparseKVCache::HeadCache& SparseKVCache::head(std::size_t layer, std::size_t kv_head) const {
  if (layer >= layers_ || kv_head >= n_kv_heads_) raise(Errc::kInvalidArgument, "cache head index out of range");
  return heads_[layer * n_kv_heads_ + kv_head];
}

SparseKVCache::HeadCache& SparseKVCache::head(std::size_t layer, std::size_t kv_head) {
  return const_cast<HeadCache&>(std::as_const(*this).head(layer, kv_head));
}

void SparseKVCache::append_token(std::size_t layer, std::span<const float> k, std::span<const float> v) {
  const std::size_t width = n_kv_heads_ * head_dim_;
  if (layer >= layers_) raise(Errc::kInvalidArgument, "layer out of range");
  if (k.size() != width || v.size() != width) {
    raise(Errc::kDimensionMismatch, "append_token expects n_kv_heads * head_dim = " + std::to_string(width) + " values");
  }
  for (std::size_t g = 0; g < n_kv_heads_; ++g) {
    HeadCache& h = heads_[layer * n_kv_heads_ + g];
    for (std::size_t d = 0; d < head_dim_; ++d) {
      h.k_tail.push_back(bf16::from_float(k[g * head_dim_ + d]));
      h.v_tail.push_back(bf16::from_float(v[g * head_dim_ + d]));
    }
  }
  ++n_tail_[layer];
}

std::size_t SparseKVCache::static_bytes() const {
  std::size_t total = 0;
  for (const HeadCache& h : heads_) {
    if (h.k_static) total += compressed_size_bytes(*h.k_static);
    if (h.v_static) total += compressed_size_bytes(*h.v_static);
  }
  return total;
}

std::size_t SparseKVCache::tail_bytes() const {
  std::size_t total = 0;
  for (const HeadCache& h : heads_) total += (h.k_tail.size() + h.v_tail.size()) * sizeof(bf16);
  return total;
}

namespace {

Matrix<bf16> to_bf16(const Matrix<float>& m) {
  Matrix<bf16> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = bf16::from_float(m.flat()[i]);
  return out;
}

Matrix<bf16> transpose(const Matrix<bf16>& m) {
  Matrix<bf16> out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  }
  return out;
}

}  // namespace

SparseKVCache pack_kv(std::span<const LayerKV> layers, std::size_t n_heads, double k_sparsity, double v_sparsity) {
  if (layers.empty() || layers[0].k.empty()) raise(Errc::kInvalidArgument, "pack_kv needs at least one layer and head");
  const std::size_t n_kv = layers[0].k.size();
  const std::size_t n_static = layers[0].k[0].rows();
  const std::size_t head_dim = layers[0].k[0].cols();
  SparseKVCache cache(layers.size(), n_heads, n_kv, head_dim, n_static);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerKV& src = layers[l];
    if (src.k.size() != n_kv || src.v.size() != n_kv) raise(Errc::kInvalidArgument, "KV head count differs by layer");
    std::vector<Matrix<bf16>> k;
    std::vector<Matrix<bf16>> v;
    for (std::size_t g = 0; g < n_kv; ++g) {
      for (const Matrix<float>* m : {&src.k[g], &src.v[g]}) {
        if (m->rows() != n_static || m->cols() != head_dim) {
          raise(Errc::kDimensionMismatch, "every K/V head must be " + std::to_string(n_static) + "x" +
                                              std::to_string(head_dim));
        }
      }
      k.push_back(to_bf16(src.k[g]));
      v.push_back(to_bf16(src.v[g]));
    }
    std::vector<Matrix<bf16>*> kp;
    std::vector<Matrix<bf16>*> vp;
    for (std::size_t g = 0; g < n_kv; ++g) {
      kp.push_back(&k[g]);
      vp.push_back(&v[g]);
    }
    magnitude_prune_jointly<bf16>(kp, k_sparsity);
    magnitude_prune_jointly<bf16>(vp, v_sparsity);
    if (n_static == 0) continue;
    for (std::size_t g = 0; g < n_kv; ++g) {
      auto& h = cache.head(l, g);
      h.k_static = pack_weights(transpose(k[g]), TileLayout::bf16_tiles(), 1);
      h.v_static = pack_weights(v[g], TileLayout::bf16_tiles(), 1);
    }
  }
  return cache;
}

void softmax_inplace(std::span<float> x) {
  if (x.empty()) return;
  const float peak = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (float& v : x) {
    v = std::exp(v - peak);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (float& v : x) v = static_cast<float>(v * inv);
}

Matrix<float> sparse_attention(const Matrix<float>& q, const SparseKVCache& cache, std::size_t layer,
                               Matrix<float>* probabilities, Backend backend) {
  if (layer >= cache.layers()) raise(Errc::kInvalidArgument, "layer out of range");
  const std::size_t hd = cache.head_dim();
  if (q.rows() != cache.n_heads() || q.cols() != hd) {
    raise(Errc::kDimensionMismatch, "query must be " + std::to_string(cache.n_heads()) + "x" + std::to_string(hd));
  }
  const std::size_t ctx = cache.context(layer);
  if (ctx == 0) raise(Errc::kNoContext, "layer " + std::to_string(layer) + " holds no tokens");
  if (!backend_available(backend)) raise(Errc::kUnsupported, "backend not available");

  const std::size_t group = cache.group_size();
  const std::size_t n_static = cache.n_static();
  const std::size_t n_tail = cache.n_tail(layer);
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  Matrix<float> out(cache.n_heads(), hd);
  if (probabilities != nullptr) *probabilities = Matrix<float>(cache.n_heads(), ctx);

  std::exception_ptr failure;
  const int kv_heads = static_cast<int>(cache.n_kv_heads());
#pragma omp parallel for schedule(static, 1)
  for (int gi = 0; gi < kv_heads; ++gi) {
    try {
      const auto g = static_cast<std::size_t>(gi);
      const auto& h = cache.head(layer, g);
      Matrix<bf16> qg(group, hd);
      for (std::size_t i = 0; i < group; ++i) {
        for (std::size_t d = 0; d < hd; ++d) qg(i, d) = bf16::from_float(q(g * group + i, d));
      }
      Matrix<float> scores(group, ctx);
      if (n_static > 0) {
        const Matrix<float> s = sparse_gemm(qg, *h.k_static, GemmPlan::for_weights(group, *h.k_static, 1, backend));
        for (std::size_t i = 0; i < group; ++i) std::copy(s.row(i).begin(), s.row(i).end(), scores.row(i).begin());
      }
      for (std::size_t i = 0; i < group; ++i) {
        for (std::size_t t = 0; t < n_tail; ++t) {
          float acc = 0.0f;
          for (std::size_t d = 0; d < hd; ++d) acc += qg(i, d).to_float() * h.k_tail[t * hd + d].to_float();
          scores(i, n_static + t) = acc;
        }
        for (float& s : scores.row(i)) s *= scale;
        softmax_inplace(scores.row(i));
      }
      Matrix<float> o(group, hd);
      if (n_static > 0) {
        Matrix<bf16> p(group, n_static);
        for (std::size_t i = 0; i < group; ++i) {
          for (std::size_t t = 0; t < n_static; ++t) p(i, t) = bf16::from_float(scores(i, t));
        }
        o = sparse_gemm(p, *h.v_static, GemmPlan::for_weights(group, *h.v_static, 1, backend));
      }
      for (std::size_t i = 0; i < group; ++i) {
        for (std::size_t t = 0; t < n_tail; ++t) {
          const float w = scores(i, n_static + t);
          for (std::size_t d = 0; d < hd; ++d) o(i, d) += w * h.v_tail[t * hd + d].to_float();
        }
        std::copy(o.row(i).begin(), o.row(i).end(), out.row(g * group + i).begin());
        if (probabilities != nullptr) {
          std::copy(scores.row(i).begin(), scores.row(i).end(), probabilities->row(g * group + i).begin());
        }
      }
    } catch (...) {
#pragma omp critical(spx_attention_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kManifestFormat = "spx-kv-cache";
constexpr int kManifestVersion = 1;

std::string file_stem(std::size_t layer, std::size_t head, const char* role) {
  return "l" + std::to_string(layer) + "_h" + std::to_string(head) + "_" + role;
}

Matrix<bf16> tail_matrix(const std::vector<bf16>& tail, std::size_t hd) {
  return Matrix<bf16>(tail.size() / hd, hd, tail);
}

}  // namespace

void save_cache(const SparseKVCache& cache, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {
      {"format", kManifestFormat},          {"version", kManifestVersion},       {"layers", cache.layers()},
      {"n_heads", cache.n_heads()},         {"n_kv_heads", cache.n_kv_heads()}, {"head_dim", cache.head_dim()},
      {"n_static", cache.n_static()},
  };
  nlohmann::json tails = nlohmann::json::array();
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t l = 0; l < cache.layers(); ++l) {
    tails.push_back(cache.n_tail(l));
    for (std::size_t g = 0; g < cache.n_kv_heads(); ++g) {
      const auto& h = cache.head(l, g);
      const auto add = [&](const char* role, const std::string& file) {
        tensors.push_back({{"layer", l}, {"kv_head", g}, {"role", role}, {"file", file}});
      };
      if (h.k_static) {
        const std::string k = file_stem(l, g, "k_static") + ".spx";
        const std::string v = file_stem(l, g, "v_static") + ".spx";
        save_packed(*h.k_static, dir / k);
        save_packed(*h.v_static, dir / v);
        add("k_static", k);
        add("v_static", v);
      }
      if (cache.n_tail(l) > 0) {
        const std::string k = file_stem(l, g, "k_tail") + ".raw";
        const std::string v = file_stem(l, g, "v_tail") + ".raw";
        save_dense(tail_matrix(h.k_tail, cache.head_dim()), dir / k);
        save_dense(tail_matrix(h.v_tail, cache.head_dim()), dir / v);
        add("k_tail", k);
        add("v_tail", v);
      }
    }
  }
  manifest["n_tail"] = tails;
  manifest["tensors"] = tensors;
  std::ofstream os(dir / kManifestName, std::ios::trunc);
  if (!os) raise(Errc::kIo, "cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
  if (!os) raise(Errc::kIo, "cannot write manifest in " + dir.string());
}

SparseKVCache load_cache(const std::filesystem::path& dir) {
  std::ifstream is(dir / kManifestName);
  if (!is) raise(Errc::kIo, "cannot open manifest in " + dir.string());
  try {
    const nlohmann::json manifest = nlohmann::json::parse(is);
    if (manifest.at("format") != kManifestFormat) raise(Errc::kBadMagic, "manifest format is not spx-kv-cache");
    if (manifest.at("version") != kManifestVersion) raise(Errc::kVersionMismatch, "manifest version");
    SparseKVCache cache(manifest.at("layers"), manifest.at("n_heads"), manifest.at("n_kv_heads"),
                        manifest.at("head_dim"), manifest.at("n_static"));
    const std::size_t hd = cache.head_dim();
    const auto& tails = manifest.at("n_tail");
    if (tails.size() != cache.layers()) raise(Errc::kCorruptTensor, "n_tail must list every layer");
    for (const auto& entry : manifest.at("tensors")) {
      const std::size_t l = entry.at("layer");
      const std::size_t g = entry.at("kv_head");
      const std::string role = entry.at("role");
      const std::filesystem::path file = dir / entry.at("file").get<std::string>();
      auto& h = cache.head(l, g);
      if (role == "k_static" || role == "v_static") {
        PackedSparseTensor t = load_packed(file);
        const bool is_k = role == "k_static";
        const std::size_t rows = is_k ? hd : cache.n_static();
        const std::size_t cols = is_k ? cache.n_static() : hd;
        if (t.logical_rows() != rows || t.logical_cols() != cols || t.dtype() != Dtype::kBF16) {
          raise(Errc::kCorruptTensor, file.string() + " has the wrong shape for " + role);
        }
        (is_k ? h.k_static : h.v_static) = std::move(t);
      } else if (role == "k_tail" || role == "v_tail") {
        const DenseTensor t = load_dense(file);
        const auto* m = std::get_if<Matrix<bf16>>(&t);
        const std::size_t n_tail = tails.at(l);
        if (m == nullptr || m->rows() != n_tail || m->cols() != hd) {
          raise(Errc::kCorruptTensor, file.string() + " has the wrong shape for " + role);
        }
        (role == "k_tail" ? h.k_tail : h.v_tail).assign(m->flat().begin(), m->flat().end());
      } else {
        raise(Errc::kCorruptTensor, "unknown tensor role " + role);
      }
    }
    for (std::size_t l = 0; l < cache.layers(); ++l) {
      const std::size_t n_tail = tails.at(l);
      for (std::size_t g = 0; g < cache.n_kv_heads(); ++g) {
        const auto& h = cache.head(l, g);
        const bool static_ok = cache.n_static() == 0 || (h.k_static && h.v_static);
        if (!static_ok || h.k_tail.size() != n_tail * hd || h.v_tail.size() != n_tail * hd) {
          raise(Errc::kCorruptTensor, "manifest is missing tensors for layer " + std::to_string(l));
        }
      }
    }
    cache.n_tail_ = tails.get<std::vector<std::size_t>>();
    return cache;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::kCorruptTensor, std::string("manifest: ") + e.what());
  }
}

}  // namespace spx
