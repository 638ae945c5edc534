// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spx/error.hpp"

namespace spx::oracle {

namespace {

void check_product(std::size_t a_cols, std::size_t b_rows) {
  if (a_cols != b_rows) {
    raise(Errc::kDimensionMismatch, std::to_string(a_cols) + " columns times " + std::to_string(b_rows) + " rows");
  }
}

}  // namespace

Matrix<double> naive_gemm_f64(const Matrix<double>& a, const Matrix<double>& b) {
  check_product(a.cols(), b.rows());
  Matrix<double> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix<double> abs_gemm_f64(const Matrix<double>& a, const Matrix<double>& b) {
  check_product(a.cols(), b.rows());
  Matrix<double> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += std::fabs(a(i, k)) * std::fabs(b(k, j));
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix<std::int64_t> int_gemm(const Matrix<std::int8_t>& a, const Matrix<std::int8_t>& b) {
  check_product(a.cols(), b.rows());
  // Integer sums are exact, so the row-streaming order changes nothing.
  Matrix<std::int64_t> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const std::int64_t x = a(i, k);
      if (x == 0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += x * std::int64_t{b(k, j)};
    }
  }
  return c;
}

float ordered_dot(std::span<const float> a, std::span<const float> b) {
  check_product(a.size(), b.size());
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

namespace {

template <class T>
ExpandResult<T> expand(std::span<const std::uint32_t> words, std::span<const T> values, std::size_t cursor) {
  ExpandResult<T> out;
  out.elements.reserve(words.size() * 32);
  for (std::uint32_t word : words) {
    for (int bit = 0; bit < 32; ++bit) {
      if (word & (std::uint32_t{1} << bit)) {
        if (cursor >= values.size()) raise(Errc::kExhaustedValues, "scalar expand ran past the values");
        out.elements.push_back(values[cursor]);
        ++cursor;
      } else {
        out.elements.push_back(T{});
      }
    }
  }
  out.cursor = cursor;
  return out;
}

}  // namespace

ExpandResult<bf16> scalar_expand(std::span<const std::uint32_t> words, std::span<const bf16> values,
                                 std::size_t cursor) {
  return expand(words, values, cursor);
}

ExpandResult<std::int8_t> scalar_expand(std::span<const std::uint32_t> words, std::span<const std::int8_t> values,
                                        std::size_t cursor) {
  return expand(words, values, cursor);
}

std::uint32_t scalar_popcount(std::uint32_t word) {
  std::uint32_t n = 0;
  for (; word != 0; word >>= 1) n += word & 1u;
  return n;
}

std::array<std::uint32_t, 16> scalar_prefix_sum(const std::array<std::uint32_t, 16>& v) {
  std::array<std::uint32_t, 16> out{};
  std::uint32_t acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    out[i] = acc;
  }
  return out;
}

std::vector<std::uint32_t> scalar_cursor_scan(std::span<const std::uint32_t> bitmap,
                                              std::span<const std::size_t> bit_offsets) {
  std::vector<std::uint32_t> out;
  for (std::size_t offset : bit_offsets) {
    std::uint32_t count = 0;
    for (std::size_t bit = 0; bit < offset; ++bit) count += (bitmap[bit / 32] >> (bit % 32)) & 1u;
    out.push_back(count);
  }
  return out;
}

Matrix<double> naive_attention(const Matrix<double>& q, const std::vector<Matrix<double>>& k,
                               const std::vector<Matrix<double>>& v, double scale, Matrix<double>* probabilities) {
  const std::size_t heads = q.rows();
  const std::size_t hd = q.cols();
  if (k.empty() || k.size() != v.size() || heads % k.size() != 0) {
    raise(Errc::kInvalidArgument, "query heads must be a multiple of KV heads");
  }
  const std::size_t group = heads / k.size();
  std::vector<Matrix<double>> k_rep;
  std::vector<Matrix<double>> v_rep;
  for (std::size_t h = 0; h < heads; ++h) {
    k_rep.push_back(k[h / group]);
    v_rep.push_back(v[h / group]);
  }
  const std::size_t ctx = k[0].rows();
  if (ctx == 0) raise(Errc::kNoContext, "empty context");
  Matrix<double> out(heads, hd);
  if (probabilities != nullptr) *probabilities = Matrix<double>(heads, ctx);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> scores(ctx);
    for (std::size_t t = 0; t < ctx; ++t) {
      double s = 0.0;
      for (std::size_t d = 0; d < hd; ++d) s += q(h, d) * k_rep[h](t, d);
      scores[t] = s * scale;
    }
    const double peak = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
      s = std::exp(s - peak);
      sum += s;
    }
    for (std::size_t t = 0; t < ctx; ++t) {
      const double p = scores[t] / sum;
      if (probabilities != nullptr) (*probabilities)(h, t) = p;
      for (std::size_t d = 0; d < hd; ++d) out(h, d) += p * v_rep[h](t, d);
    }
  }
  return out;
}

double gemm_relative_error(const Matrix<bf16>& a, const Matrix<bf16>& b, const Matrix<float>& c) {
  if (a.cols() < b.rows()) check_product(a.cols(), b.rows());
  if (c.rows() != a.rows() || c.cols() != b.cols()) raise(Errc::kDimensionMismatch, "output shape");
  const std::size_t n = b.cols();
  std::vector<double> ref(n);
  std::vector<double> scale(n);
  std::vector<double> row(n);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(ref.begin(), ref.end(), 0.0);
    std::fill(scale.begin(), scale.end(), 0.0);
    for (std::size_t k = 0; k < b.rows(); ++k) {
      const double x = a(i, k).to_float();
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = b(k, j).to_float();
        ref[j] += x * w;
        scale[j] += std::fabs(x) * std::fabs(w);
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double err = std::fabs(static_cast<double>(c(i, j)) - ref[j]);
      if (err == 0.0) continue;
      worst = std::max(worst, scale[j] > 0.0 ? err / scale[j] : INFINITY);
    }
  }
  return worst;
}

double attention_relative_error(const Matrix<double>& q, const std::vector<Matrix<double>>& k,
                                const std::vector<Matrix<double>>& v, double scale, const Matrix<float>& out) {
  const std::size_t heads = q.rows();
  const std::size_t hd = q.cols();
  if (k.empty() || k.size() != v.size() || heads % k.size() != 0) {
    raise(Errc::kInvalidArgument, "query heads must be a multiple of KV heads");
  }
  if (out.rows() != heads || out.cols() != hd) raise(Errc::kDimensionMismatch, "output shape");
  const std::size_t group = heads / k.size();
  const std::size_t ctx = k[0].rows();
  if (ctx == 0) raise(Errc::kNoContext, "empty context");
  double worst = 0.0;
  std::vector<double> p(ctx);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix<double>& kh = k[h / group];
    const Matrix<double>& vh = v[h / group];
    for (std::size_t t = 0; t < ctx; ++t) {
      double s = 0.0;
      for (std::size_t d = 0; d < hd; ++d) s += q(h, d) * kh(t, d);
      p[t] = s * scale;
    }
    const double peak = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& x : p) {
      x = std::exp(x - peak);
      sum += x;
    }
    for (double& x : p) x /= sum;
    for (std::size_t d = 0; d < hd; ++d) {
      double r = 0.0;
      double bound = 0.0;
      for (std::size_t t = 0; t < ctx; ++t) {
        r += p[t] * vh(t, d);
        bound += p[t] * std::fabs(vh(t, d));
      }
      const double err = std::fabs(static_cast<double>(out(h, d)) - r);
      if (err == 0.0) continue;
      worst = std::max(worst, bound > 0.0 ? err / bound : INFINITY);
    }
  }
  return worst;
}

template <class T>
std::vector<T> prune_by_sort(std::span<const T> x, double sparsity) {
  const std::size_t n = x.size();
  auto drop = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(n) * (1.0 + 1e-12)));
  drop = std::min(drop, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Descending index first, then a stable sort by magnitude keeps that
  // order among ties.
  std::reverse(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(static_cast<double>(to_float(x[a]))) < std::fabs(static_cast<double>(to_float(x[b])));
  });
  std::vector<T> out(x.begin(), x.end());
  for (std::size_t i = 0; i < drop; ++i) out[order[i]] = T{};
  return out;
}

template std::vector<float> prune_by_sort<float>(std::span<const float>, double);
template std::vector<bf16> prune_by_sort<bf16>(std::span<const bf16>, double);
template std::vector<std::int8_t> prune_by_sort<std::int8_t>(std::span<const std::int8_t>, double);

}  // namespace spx::oracle
