// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/kernel.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <string>

#include <omp.h>

#include "kernels/backends.hpp"

namespace spx {

std::string_view to_string(Backend backend) noexcept {
  switch (backend) {
    case Backend::kPortable: return "portable";
    case Backend::kAvx512: return "avx512";
    case Backend::kAmx: return "amx";
  }
  return "unknown";
}

std::optional<Backend> parse_backend(std::string_view name) noexcept {
  for (Backend b : {Backend::kPortable, Backend::kAvx512, Backend::kAmx}) {
    if (name == to_string(b)) return b;
  }
  return std::nullopt;
}

bool backend_available(Backend backend) noexcept {
  const auto& f = detail::cpu_features();
  switch (backend) {
    case Backend::kPortable: return true;
    case Backend::kAvx512: return f.avx512;
    case Backend::kAmx: return f.amx;
  }
  return false;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kPortable, Backend::kAvx512, Backend::kAmx}) {
    if (backend_available(b)) out.push_back(b);
  }
  return out;
}

Backend default_backend() noexcept {
  static const Backend chosen = [] {
    if (const char* env = std::getenv("SPX_BACKEND")) {
      if (auto b = parse_backend(env); b && backend_available(*b)) return *b;
    }
    if (backend_available(Backend::kAmx)) return Backend::kAmx;
    if (backend_available(Backend::kAvx512)) return Backend::kAvx512;
    return Backend::kPortable;
  }();
  return chosen;
}

namespace {

void require_backend(Backend backend) {
  if (!backend_available(backend)) {
    raise(Errc::kUnsupported, "backend " + std::string(to_string(backend)) + " is not available on this CPU");
  }
}

template <class T>
std::size_t decompress_impl(std::span<const std::uint32_t> metadata, std::span<const T> values, std::size_t cursor,
                            TileBuffer& out, Backend backend) {
  const TileLayout layout(dtype_of<T>());
  if (metadata.size() != layout.words_per_tile()) {
    raise(Errc::kInvalidArgument, "tile metadata must hold " + std::to_string(layout.words_per_tile()) + " words");
  }
  const std::size_t count = detail::tile_popcount(metadata.data(), metadata.size());
  if (cursor > values.size() || values.size() - cursor < count) {
    raise(Errc::kExhaustedValues, "tile needs " + std::to_string(count) + " values at cursor " + std::to_string(cursor) +
                                      ", " + std::to_string(values.size()) + " available");
  }
  require_backend(backend);
  T* dst = out.as<T>().data();
  const T* src = values.data() + cursor;
  if constexpr (std::is_same_v<T, bf16>) {
    if (backend == Backend::kPortable) {
      detail::expand_bf16_portable(metadata.data(), src, dst);
    } else {
      detail::expand_bf16_avx512(metadata.data(), src, dst);
    }
  } else {
    if (backend == Backend::kPortable) {
      detail::expand_int8_portable(metadata.data(), src, dst);
    } else {
      detail::expand_int8_avx512(metadata.data(), src, dst);
    }
  }
  return cursor + count;
}

}  // namespace

std::size_t decompress_tile(std::span<const std::uint32_t> metadata, std::span<const bf16> values, std::size_t cursor,
                            TileBuffer& out, Backend backend) {
  return decompress_impl(metadata, values, cursor, out, backend);
}

std::size_t decompress_tile(std::span<const std::uint32_t> metadata, std::span<const std::int8_t> values,
                            std::size_t cursor, TileBuffer& out, Backend backend) {
  return decompress_impl(metadata, values, cursor, out, backend);
}

// ---------------------------------------------------------------------------
// Planning

GemmPlan::GemmPlan(std::size_t out_rows, std::size_t logical_inner, std::size_t logical_out_cols,
                   std::size_t col_workers, std::size_t threads, TileLayout layout, Backend backend)
    : out_rows_(out_rows),
      inner_(layout.padded_rows(logical_inner)),
      out_cols_(layout.padded_cols(logical_out_cols)),
      logical_inner_(logical_inner),
      logical_out_cols_(logical_out_cols),
      col_workers_(col_workers),
      layout_(layout),
      backend_(backend) {
  if (out_rows == 0 || logical_inner == 0 || logical_out_cols == 0) {
    raise(Errc::kInvalidArgument, "GEMM dimensions must be positive");
  }
  if (layout.order() != PackOrder::kTile) raise(Errc::kInvalidArgument, "GEMM plans need tile-order layouts");
  require_backend(backend);
  const std::size_t blocks = TileLayout::column_blocks(out_cols_);
  const auto col_bounds = partition_column_blocks(blocks, col_workers);
  const std::size_t row_blocks = ceil_div(out_rows, kRowBlock);
  row_splits_ = threads > col_workers ? std::min(threads / col_workers, row_blocks) : 1;
  const auto row_bounds = partition_column_blocks(row_blocks, row_splits_);
  for (std::size_t c = 0; c < col_workers; ++c) {
    for (std::size_t r = 0; r < row_splits_; ++r) {
      slices_.push_back({c, col_bounds[c], col_bounds[c + 1], row_bounds[r] * kRowBlock,
                         std::min(row_bounds[r + 1] * kRowBlock, out_rows)});
    }
  }
}

GemmPlan GemmPlan::create(std::size_t out_rows, std::size_t inner, std::size_t out_cols, std::size_t workers,
                          TileLayout layout, Backend backend) {
  if (workers == 0) raise(Errc::kInvalidArgument, "at least one worker is required");
  const std::size_t blocks = TileLayout::column_blocks(layout.padded_cols(out_cols));
  return GemmPlan(out_rows, inner, out_cols, std::min(workers, std::max<std::size_t>(blocks, 1)), workers, layout,
                  backend);
}

GemmPlan GemmPlan::for_weights(std::size_t out_rows, const PackedSparseTensor& weights, std::size_t threads,
                               Backend backend) {
  const std::size_t col_workers = weights.num_workers();
  return GemmPlan(out_rows, weights.logical_rows(), weights.logical_cols(), col_workers,
                  std::max(threads, col_workers), weights.layout(), backend);
}

// ---------------------------------------------------------------------------
// Tile-order drivers

namespace {

using detail::kAccStride;

template <class T>
struct DenseSource {
  const T* data;
  std::size_t tile_elements;

  std::size_t position() const { return 0; }
  void seek(std::size_t) {}
  const T* tile(std::size_t index, std::size_t) { return data + index * tile_elements; }
};

template <class T>
class SparseSource {
 public:
  using Expand = std::size_t (*)(const std::uint32_t*, const T*, T*) noexcept;

  SparseSource(const PackedSparseTensor& w, std::size_t cursor, Expand expand)
      : bitmap_(w.bitmap().data()),
        values_(w.values<T>().data()),
        words_(w.layout().words_per_tile()),
        cursor_(cursor),
        expand_(expand) {}

  std::size_t position() const { return cursor_; }
  void seek(std::size_t cursor) { cursor_ = cursor; }
  const T* tile(std::size_t index, std::size_t slot) {
    T* out = buffers_[slot].as<T>().data();
    cursor_ += expand_(bitmap_ + index * words_, values_ + cursor_, out);
    return out;
  }

 private:
  const std::uint32_t* bitmap_;
  const T* values_;
  std::size_t words_;
  std::size_t cursor_;
  Expand expand_;
  TileBuffer buffers_[2];
};

template <class T, class Acc>
class BufferEngine {
 public:
  using Madd = void (*)(Acc*, const T*, std::size_t, std::size_t, const T*, const T*) noexcept;

  explicit BufferEngine(Madd madd) : madd_(madd) {}

  void begin(std::size_t rows) {
    rows_ = rows;
    std::fill_n(acc_, rows * kAccStride, Acc{});
  }
  void step(const T* in, std::size_t stride, const T* w0, const T* w1) { madd_(acc_, in, stride, rows_, w0, w1); }
  const Acc* finish(bool) const { return acc_; }

 private:
  Madd madd_;
  std::size_t rows_ = 0;
  alignas(64) Acc acc_[GemmPlan::kRowBlock * kAccStride];
};

template <class T, class Acc>
class AmxEngine {
 public:
  AmxEngine() = default;
  AmxEngine(const AmxEngine&) = delete;
  AmxEngine& operator=(const AmxEngine&) = delete;
  ~AmxEngine() { detail::amx_release(); }

  void begin(std::size_t rows) {
    rows_ = rows;
    detail::amx_configure(rows);
    detail::amx_zero();
  }
  void step(const T* in, std::size_t stride, const T* w0, const T* w1) {
    if constexpr (std::is_same_v<T, bf16>) {
      detail::amx_step_bf16(in, stride, rows_, w0, w1);
    } else {
      detail::amx_step_int8(in, stride, rows_, w0, w1);
    }
  }
  const Acc* finish(bool two_strips) {
    if constexpr (std::is_same_v<Acc, float>) {
      detail::amx_store_f32(acc_, rows_, two_strips);
    } else {
      detail::amx_store_i32(acc_, rows_, two_strips);
    }
    return acc_;
  }

 private:
  std::size_t rows_ = 0;
  alignas(64) Acc acc_[GemmPlan::kRowBlock * kAccStride];
};

template <class T, class Acc, class Source, class Engine>
void run_slice(const WorkerSlice& slice, const GemmPlan& plan, const T* input, Source& source, Engine& engine,
               Matrix<Acc>& out) {
  const TileLayout& layout = plan.layout();
  const std::size_t stride = plan.inner();
  const std::size_t k_tiles = stride / layout.k_tile();
  const std::size_t k_step = layout.k_tile();
  const std::size_t strips_total = plan.out_cols() / TileLayout::kStripCols;
  const std::size_t n_logical = plan.logical_out_cols();
  for (std::size_t cb = slice.block_begin; cb < slice.block_end; ++cb) {
    const std::size_t strips = std::min<std::size_t>(2, strips_total - 2 * cb);
    const std::size_t first_tile = TileLayout::column_block_start(cb, stride) / layout.tile_elements();
    const std::size_t block_cursor = source.position();
    const std::size_t col0 = cb * TileLayout::kBlockCols;
    const std::size_t cols = std::min(strips * TileLayout::kStripCols, n_logical - std::min(n_logical, col0));
    for (std::size_t r0 = slice.row_begin; r0 < slice.row_end; r0 += GemmPlan::kRowBlock) {
      const std::size_t rows = std::min(GemmPlan::kRowBlock, slice.row_end - r0);
      source.seek(block_cursor);
      engine.begin(rows);
      const T* x = input + r0 * stride;
      for (std::size_t kt = 0; kt < k_tiles; ++kt) {
        const std::size_t t = first_tile + kt * strips;
        const T* w0 = source.tile(t, 0);
        const T* w1 = strips == 2 ? source.tile(t + 1, 1) : nullptr;
        engine.step(x + kt * k_step, stride, w0, w1);
      }
      const Acc* acc = engine.finish(strips == 2);
      for (std::size_t m = 0; m < rows; ++m) {
        std::memcpy(&out(r0 + m, col0), acc + m * kAccStride, cols * sizeof(Acc));
      }
    }
  }
}

template <class T>
const T* prepare_input(const Matrix<T>& input, const GemmPlan& plan, Matrix<T>& scratch) {
  if (input.rows() != plan.out_rows()) {
    raise(Errc::kDimensionMismatch, "input has " + std::to_string(input.rows()) + " rows, plan expects " +
                                        std::to_string(plan.out_rows()));
  }
  if (input.cols() == plan.inner()) return input.data();
  if (input.cols() != plan.logical_inner()) {
    raise(Errc::kDimensionMismatch, "input has " + std::to_string(input.cols()) + " columns, plan expects " +
                                        std::to_string(plan.logical_inner()));
  }
  scratch = Matrix<T>(input.rows(), plan.inner());
  for (std::size_t m = 0; m < input.rows(); ++m) {
    std::copy(input.row(m).begin(), input.row(m).end(), scratch.row(m).begin());
  }
  return scratch.data();
}

template <class T>
void check_weight_shape(const GemmPlan& plan, const TileLayout& layout, std::size_t rows, std::size_t cols) {
  if (plan.layout().dtype() != dtype_of<T>()) raise(Errc::kInvalidArgument, "plan dtype differs from the operands'");
  if (layout != plan.layout()) raise(Errc::kDimensionMismatch, "weight layout differs from the plan's");
  if (rows != plan.logical_inner() || cols != plan.logical_out_cols()) {
    raise(Errc::kDimensionMismatch, "weights are " + std::to_string(rows) + "x" + std::to_string(cols) +
                                        ", plan expects " + std::to_string(plan.logical_inner()) + "x" +
                                        std::to_string(plan.logical_out_cols()));
  }
}

// INT32 accumulators cannot overflow while K * 128 * 128 < 2^31; raw INT8
// inputs may hold -128, so the bound uses it rather than 127.
constexpr std::size_t kMaxInt8Inner = 2147483647u / (128u * 128u);

void check_int8_inner(const GemmPlan& plan) {
  if (plan.logical_inner() > kMaxInt8Inner) {
    raise(Errc::kInvalidArgument, "INT8 inner dimension " + std::to_string(plan.logical_inner()) + " exceeds " +
                                      std::to_string(kMaxInt8Inner));
  }
}

template <class Fn>
void parallel_slices(const GemmPlan& plan, Fn&& fn) {
  const auto& slices = plan.slices();
  const int count = static_cast<int>(slices.size());
  const int threads = std::max(1, std::min(count, omp_get_max_threads()));
#pragma omp parallel for schedule(static, 1) num_threads(threads)
  for (int i = 0; i < count; ++i) fn(slices[static_cast<std::size_t>(i)]);
}

template <class T, class Acc, class MakeSource>
Matrix<Acc> drive(const T* input, const GemmPlan& plan, MakeSource&& make_source) {
  Matrix<Acc> out(plan.out_rows(), plan.logical_out_cols());
  const Backend backend = plan.backend();
  parallel_slices(plan, [&](const WorkerSlice& slice) {
    auto source = make_source(slice);
    if (backend == Backend::kAmx) {
      AmxEngine<T, Acc> engine;
      run_slice(slice, plan, input, source, engine, out);
      return;
    }
    typename BufferEngine<T, Acc>::Madd madd = nullptr;
    if constexpr (std::is_same_v<T, bf16>) {
      madd = backend == Backend::kAvx512 ? detail::madd_bf16_avx512 : detail::madd_bf16_portable;
    } else {
      madd = backend == Backend::kAvx512 ? detail::madd_int8_avx512 : detail::madd_int8_portable;
    }
    BufferEngine<T, Acc> engine(madd);
    run_slice(slice, plan, input, source, engine, out);
  });
  return out;
}

template <class T>
typename SparseSource<T>::Expand expander(Backend backend) {
  if constexpr (std::is_same_v<T, bf16>) {
    return backend == Backend::kPortable ? detail::expand_bf16_portable : detail::expand_bf16_avx512;
  } else {
    return backend == Backend::kPortable ? detail::expand_int8_portable : detail::expand_int8_avx512;
  }
}

template <class T, class Acc>
Matrix<Acc> dense_impl(const Matrix<T>& input, const DenseTiled<T>& weights, const GemmPlan& plan) {
  check_weight_shape<T>(plan, weights.layout(), weights.logical_rows(), weights.logical_cols());
  Matrix<T> scratch;
  const T* x = prepare_input(input, plan, scratch);
  const T* data = weights.data().data();
  const std::size_t te = plan.layout().tile_elements();
  return drive<T, Acc>(x, plan, [&](const WorkerSlice&) { return DenseSource<T>{data, te}; });
}

template <class T, class Acc>
Matrix<Acc> sparse_impl(const Matrix<T>& input, const PackedSparseTensor& weights, const GemmPlan& plan) {
  check_weight_shape<T>(plan, weights.layout(), weights.logical_rows(), weights.logical_cols());
  if (weights.num_workers() != plan.col_workers()) {
    raise(Errc::kRepartitionRequired, "tensor has cursors for " + std::to_string(weights.num_workers()) +
                                          " workers, plan uses " + std::to_string(plan.col_workers()));
  }
  Matrix<T> scratch;
  const T* x = prepare_input(input, plan, scratch);
  const auto cursors = weights.thread_cursors();
  const auto expand = expander<T>(plan.backend());
  return drive<T, Acc>(x, plan, [&](const WorkerSlice& slice) {
    return SparseSource<T>(weights, cursors[slice.col_worker], expand);
  });
}

}  // namespace

Matrix<float> dense_gemm(const Matrix<bf16>& input, const DenseTiled<bf16>& weights, const GemmPlan& plan) {
  return dense_impl<bf16, float>(input, weights, plan);
}

Matrix<float> sparse_gemm(const Matrix<bf16>& input, const PackedSparseTensor& weights, const GemmPlan& plan) {
  return sparse_impl<bf16, float>(input, weights, plan);
}

Matrix<std::int32_t> int8_dense_accumulate(const Matrix<std::int8_t>& input, const DenseTiled<std::int8_t>& weights,
                                           const GemmPlan& plan) {
  check_int8_inner(plan);
  return dense_impl<std::int8_t, std::int32_t>(input, weights, plan);
}

Matrix<std::int32_t> int8_sparse_accumulate(const Matrix<std::int8_t>& input, const PackedSparseTensor& weights,
                                            const GemmPlan& plan) {
  check_int8_inner(plan);
  return sparse_impl<std::int8_t, std::int32_t>(input, weights, plan);
}

// ---------------------------------------------------------------------------
// Vector-order kernel

Matrix<float> vector_sparse_gemm(const Matrix<bf16>& input, const PackedSparseTensor& weights,
                                 std::size_t num_neuron_groups, Backend backend) {
  if (num_neuron_groups < 1 || num_neuron_groups > kMaxNeuronGroups) {
    raise(Errc::kUnsupported, "neuron group count " + std::to_string(num_neuron_groups) + " outside 1.." +
                                  std::to_string(kMaxNeuronGroups));
  }
  if (weights.layout() != TileLayout::bf16_vector()) {
    raise(Errc::kInvalidArgument, "vector kernel needs BF16 vector-order weights");
  }
  require_backend(backend);
  const std::size_t pr = weights.padded_rows();
  const std::size_t n_logical = weights.logical_cols();
  const std::size_t m_rows = input.rows();
  if (input.cols() != pr && input.cols() != weights.logical_rows()) {
    raise(Errc::kDimensionMismatch, "input has " + std::to_string(input.cols()) + " columns, weights have " +
                                        std::to_string(weights.logical_rows()) + " rows");
  }
  Matrix<bf16> scratch;
  const bf16* x = input.data();
  if (input.cols() != pr) {
    scratch = Matrix<bf16>(m_rows, pr);
    for (std::size_t m = 0; m < m_rows; ++m) std::copy(input.row(m).begin(), input.row(m).end(), scratch.row(m).begin());
    x = scratch.data();
  }
  const auto row_kernel = backend == Backend::kPortable ? detail::vector_row_portable : detail::vector_row_avx512;
  const std::size_t strips_total = weights.padded_cols() / TileLayout::kStripCols;
  const std::size_t words_per_strip = pr * TileLayout::kStripCols / TileLayout::kWordBits;
  const auto bounds = partition_column_blocks(weights.column_blocks(), weights.num_workers());
  const auto cursors = weights.thread_cursors();
  const std::uint32_t* bitmap = weights.bitmap().data();
  const bf16* values = weights.values<bf16>().data();
  Matrix<float> out(m_rows, n_logical);

  const int workers = static_cast<int>(weights.num_workers());
  const int threads = std::max(1, std::min(workers, omp_get_max_threads()));
#pragma omp parallel for schedule(static, 1) num_threads(threads)
  for (int t = 0; t < workers; ++t) {
    const auto w = static_cast<std::size_t>(t);
    const std::size_t s_end = std::min(2 * bounds[w + 1], strips_total);
    std::size_t cursor = cursors[w];
    float lanes[kMaxNeuronGroups * TileLayout::kStripCols];
    const std::uint32_t* meta[kMaxNeuronGroups];
    std::size_t starts[kMaxNeuronGroups];
    for (std::size_t s0 = 2 * bounds[w]; s0 < s_end; s0 += num_neuron_groups) {
      const std::size_t groups = std::min(num_neuron_groups, s_end - s0);
      for (std::size_t g = 0; g < groups; ++g) {
        meta[g] = bitmap + (s0 + g) * words_per_strip;
        starts[g] = cursor;
        cursor += detail::tile_popcount(meta[g], words_per_strip);
      }
      const std::size_t col0 = s0 * TileLayout::kStripCols;
      const std::size_t cols = std::min(groups * TileLayout::kStripCols, n_logical - std::min(n_logical, col0));
      for (std::size_t m = 0; m < m_rows; ++m) {
        row_kernel(x + m * pr, pr, meta, values, starts, groups, lanes);
        std::memcpy(&out(m, col0), lanes, cols * sizeof(float));
      }
    }
  }
  return out;
}

std::size_t bytes_read_model(const PackedSparseTensor& weights) { return compressed_size_bytes(weights); }

std::size_t bytes_read_model(std::size_t inner, std::size_t out_cols, Dtype dtype) {
  const TileLayout layout(dtype);
  return layout.padded_rows(inner) * layout.padded_cols(out_cols) * layout.element_bytes();
}

}  // namespace spx
