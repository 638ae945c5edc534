// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/tools/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "spx/attention.hpp"
#include "spx/int8.hpp"
#include "spx/oracle.hpp"
#include "spx/packed_io.hpp"
#include "spx/sparse_format.hpp"

namespace spx::tools {

std::string_view to_string(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::kDense: return "dense";
    case KernelKind::kSparse: return "sparse";
    case KernelKind::kVectorSparse: return "vector_sparse";
    case KernelKind::kInt8Dense: return "int8_dense";
    case KernelKind::kInt8Sparse: return "int8_sparse";
    case KernelKind::kAttention: return "attention";
  }
  return "unknown";
}

std::optional<KernelKind> parse_kernel(std::string_view name) noexcept {
  for (KernelKind k : {KernelKind::kDense, KernelKind::kSparse, KernelKind::kVectorSparse, KernelKind::kInt8Dense,
                       KernelKind::kInt8Sparse, KernelKind::kAttention}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

Dtype kernel_dtype(KernelKind kind) noexcept {
  return kind == KernelKind::kInt8Dense || kind == KernelKind::kInt8Sparse ? Dtype::kINT8 : Dtype::kBF16;
}

void BenchConfig::validate() const {
  if (kernels.empty()) raise(Errc::kInvalidArgument, "no kernel selected");
  if (reps < 3) raise(Errc::kInvalidArgument, "repetitions must be at least 3");
  if (warmup < 1) raise(Errc::kInvalidArgument, "warmup must be at least 1");
  if (workers.empty() || std::find(workers.begin(), workers.end(), 0) != workers.end()) {
    raise(Errc::kInvalidArgument, "worker counts must be positive");
  }
  if (neuron_groups == 0 || neuron_groups > kMaxNeuronGroups) {
    raise(Errc::kInvalidArgument, "neuron groups must lie in [1, " + std::to_string(kMaxNeuronGroups) + "]");
  }
  for (double s : sparsities) {
    if (!(s >= 0.0 && s <= 1.0)) raise(Errc::kInvalidArgument, "sparsity must lie in [0, 1]");
  }
  for (double s : v_sparsities) {
    if (!(s >= 0.0 && s <= 1.0)) raise(Errc::kInvalidArgument, "sparsity must lie in [0, 1]");
  }
  const bool any_gemm = std::any_of(kernels.begin(), kernels.end(), [](KernelKind k) { return k != KernelKind::kAttention; });
  const bool any_attention = std::find(kernels.begin(), kernels.end(), KernelKind::kAttention) != kernels.end();
  if (any_gemm) {
    if (shapes.empty() && weight_files.empty()) raise(Errc::kInvalidArgument, "GEMM kernels need shapes or weight files");
    if (m_values.empty() || std::find(m_values.begin(), m_values.end(), 0) != m_values.end()) {
      raise(Errc::kInvalidArgument, "M values must be positive");
    }
    for (const auto& s : shapes) {
      if (s.inner == 0 || s.out == 0) raise(Errc::kInvalidArgument, "shape '" + s.name + "' is empty");
    }
  }
  if (any_attention) {
    if (contexts.empty() || std::find(contexts.begin(), contexts.end(), 0) != contexts.end()) {
      raise(Errc::kInvalidArgument, "context lengths must be positive");
    }
    if (heads == 0 || kv_heads == 0 || head_dim == 0 || heads % kv_heads != 0) {
      raise(Errc::kInvalidArgument, "heads must be a positive multiple of kv heads");
    }
    if (!v_sparsities.empty() && v_sparsities.size() != sparsities.size()) {
      raise(Errc::kInvalidArgument, "V sparsities pair index-wise with sparsities");
    }
  }
  if (sparsities.empty() && weight_files.empty()) raise(Errc::kInvalidArgument, "no sparsity selected");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& field, std::size_t line_no) {
  T value{};
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    raise(Errc::kInvalidArgument, "malformed CSV field '" + field + "' on line " + std::to_string(line_no));
  }
  return value;
}

double parse_real(const std::string& field, std::size_t line_no) {
  // from_chars for floating point needs GCC 11's full support; strtod is
  // enough since every field was written by write_csv_row.
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    raise(Errc::kInvalidArgument, "malformed CSV field '" + field + "' on line " + std::to_string(line_no));
  }
  return v;
}

}  // namespace

void write_csv_header(std::ostream& sink) { sink << kCsvHeader << '\n'; }

void write_csv_row(const BenchResult& r, std::ostream& sink) {
  sink << r.kernel << ',' << r.shape << ',' << r.backend << ',' << r.dtype << ',' << r.m << ',' << r.k << ','
       << r.n << ',' << r.heads << ',' << r.kv_heads << ',' << r.head_dim << ',' << r.context << ','
       << format_double("%.6f", r.sparsity) << ',' << format_double("%.6f", r.v_sparsity) << ',' << r.workers
       << ',' << r.reps << ',' << r.warmup << ',' << r.seed << ',' << r.nnz << ',' << r.modeled_bytes << ','
       << r.dense_bytes << ',' << r.checksum << ',' << format_double("%.1f", r.median_ns) << ','
       << format_double("%.1f", r.min_ns) << ',' << format_double("%.6g", r.throughput) << ','
       << r.throughput_unit << '\n';
}

std::vector<BenchResult> read_csv(std::istream& source) {
  std::string line;
  if (!std::getline(source, line) || line != kCsvHeader) {
    raise(Errc::kInvalidArgument, "CSV header does not match the bench format");
  }
  std::vector<BenchResult> rows;
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 25) {
      raise(Errc::kInvalidArgument, "expected 25 CSV fields on line " + std::to_string(line_no) + ", found " +
                                        std::to_string(f.size()));
    }
    BenchResult r;
    r.kernel = f[0];
    r.shape = f[1];
    r.backend = f[2];
    r.dtype = f[3];
    r.m = parse_number<std::size_t>(f[4], line_no);
    r.k = parse_number<std::size_t>(f[5], line_no);
    r.n = parse_number<std::size_t>(f[6], line_no);
    r.heads = parse_number<std::size_t>(f[7], line_no);
    r.kv_heads = parse_number<std::size_t>(f[8], line_no);
    r.head_dim = parse_number<std::size_t>(f[9], line_no);
    r.context = parse_number<std::size_t>(f[10], line_no);
    r.sparsity = parse_real(f[11], line_no);
    r.v_sparsity = parse_real(f[12], line_no);
    r.workers = parse_number<std::size_t>(f[13], line_no);
    r.reps = parse_number<std::size_t>(f[14], line_no);
    r.warmup = parse_number<std::size_t>(f[15], line_no);
    r.seed = parse_number<std::uint64_t>(f[16], line_no);
    r.nnz = parse_number<std::size_t>(f[17], line_no);
    r.modeled_bytes = parse_number<std::size_t>(f[18], line_no);
    r.dense_bytes = parse_number<std::size_t>(f[19], line_no);
    r.checksum = f[20];
    r.median_ns = parse_real(f[21], line_no);
    r.min_ns = parse_real(f[22], line_no);
    r.throughput = parse_real(f[23], line_no);
    r.throughput_unit = f[24];
    if (!parse_kernel(r.kernel)) raise(Errc::kInvalidArgument, "unknown kernel '" + r.kernel + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::size_t default_workers() {
  if (const char* env = std::getenv("SPARAMX_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || v == 0 || env[0] == '-') {
      raise(Errc::kInvalidArgument, std::string("SPARAMX_THREADS='") + env + "' is not a positive integer");
    }
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string checksum(std::span<const float> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

constexpr double kBf16Tolerance = 1.0 / 256.0;

std::mt19937_64 stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Matrix<float> uniform(std::size_t rows, std::size_t cols, std::mt19937_64 rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Matrix<float> m(rows, cols);
  for (auto& v : m.flat()) v = dist(rng);
  return m;
}

Matrix<bf16> to_bf16(const Matrix<float>& m) {
  Matrix<bf16> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = bf16::from_float(m.flat()[i]);
  return out;
}

template <class T>
std::size_t count_nonzero(const Matrix<T>& m) {
  return static_cast<std::size_t>(
      std::count_if(m.flat().begin(), m.flat().end(), [](T v) { return to_float(v) != 0.0f || std::signbit(to_float(v)); }));
}

struct Timing {
  double median_ns = 0.0;
  double min_ns = 0.0;
};

template <class F>
Timing time_calls(const F& fn, std::size_t warmup, std::size_t reps) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ns;
  ns.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(ns.begin(), ns.end());
  const std::size_t mid = ns.size() / 2;
  Timing t;
  t.median_ns = ns.size() % 2 == 1 ? ns[mid] : 0.5 * (ns[mid - 1] + ns[mid]);
  t.min_ns = ns.front();
  return t;
}

bool bits_equal(const Matrix<float>& a, const Matrix<float>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a.flat()[i]) != std::bit_cast<std::uint32_t>(b.flat()[i])) return false;
  }
  return true;
}

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationFailure(what);
}

void inject(const BenchConfig& config, Matrix<float>& out) {
  if (config.fault_injection) config.fault_injection(out);
}

void check_bf16_accuracy(const Matrix<bf16>& input, const Matrix<bf16>& weights, const Matrix<float>& out) {
  const double err = oracle::gemm_relative_error(input, weights, out);
  require(err <= kBf16Tolerance, "relative error " + format_double("%.3g", err) + " exceeds 2^-8");
}

/// One weight matrix with every operand format derived from it on demand.
class WeightSet {
 public:
  std::string name;
  double sparsity = 0.0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::optional<Matrix<bf16>> bf16_weights;
  std::optional<Matrix<std::int8_t>> int8_weights;
  QuantParams quant;

  const DenseTiled<bf16>& bf16_tiled() {
    if (!bf16_tiled_) bf16_tiled_ = reorder_dense(*bf16_weights, TileLayout::bf16_tiles());
    return *bf16_tiled_;
  }
  const DenseTiled<std::int8_t>& int8_tiled() {
    if (!int8_tiled_) int8_tiled_ = reorder_dense(*int8_weights, TileLayout::int8_tiles());
    return *int8_tiled_;
  }
  const PackedSparseTensor& packed(const TileLayout& layout, std::size_t workers) {
    auto& base = layout.dtype() == Dtype::kINT8 ? int8_packed_ : layout.order() == PackOrder::kVector ? vector_packed_ : bf16_packed_;
    if (!base) {
      base = layout.dtype() == Dtype::kINT8 ? pack_weights(*int8_weights, layout, 1)
                                            : pack_weights(*bf16_weights, layout, 1);
    }
    auto& slot = repartitioned_[{static_cast<int>(layout.dtype()) * 2 + static_cast<int>(layout.order()), workers}];
    if (!slot) slot = std::make_unique<PackedSparseTensor>(workers == 1 ? *base : repartition(*base, workers));
    return *slot;
  }
  std::size_t nnz() const {
    return bf16_weights ? count_nonzero(*bf16_weights) : count_nonzero(*int8_weights);
  }

 private:
  std::optional<DenseTiled<bf16>> bf16_tiled_;
  std::optional<DenseTiled<std::int8_t>> int8_tiled_;
  std::optional<PackedSparseTensor> bf16_packed_;
  std::optional<PackedSparseTensor> vector_packed_;
  std::optional<PackedSparseTensor> int8_packed_;
  std::map<std::pair<int, std::size_t>, std::unique_ptr<PackedSparseTensor>> repartitioned_;
};

WeightSet synthetic_weights(const BenchConfig& config, const ProjectionShape& shape, double sparsity, bool need_bf16,
                            bool need_int8) {
  WeightSet w;
  w.name = shape.name;
  w.sparsity = sparsity;
  w.k = shape.inner;
  w.n = shape.out;
  if (need_bf16) {
    Matrix<bf16> b = to_bf16(uniform(shape.inner, shape.out, stream(config.seed, {1, shape.inner, shape.out})));
    magnitude_prune_inplace<bf16>(b.flat(), sparsity);
    w.bf16_weights = std::move(b);
  }
  if (need_int8) {
    Matrix<float> f = uniform(shape.inner, shape.out, stream(config.seed, {2, shape.inner, shape.out}));
    magnitude_prune_inplace<float>(f.flat(), sparsity);
    w.quant = choose_scales(f);
    w.int8_weights = quantize_weights(f, w.quant);
  }
  return w;
}

WeightSet file_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::kIo, "cannot open " + path.string());
  const PackedSparseTensor packed = load_packed(in);
  WeightSet w;
  w.name = path.stem().string();
  w.k = packed.logical_rows();
  w.n = packed.logical_cols();
  w.sparsity = 1.0 - static_cast<double>(packed.nnz()) / static_cast<double>(w.k * w.n);
  if (packed.dtype() == Dtype::kBF16) {
    w.bf16_weights = unpack_weights<bf16>(packed);
  } else {
    w.int8_weights = unpack_weights<std::int8_t>(packed);
    auto params = load_quant_section(in);
    w.quant = params ? *params : QuantParams{std::vector<float>(w.n, 1.0f), 1.0f};
    if (w.quant.weight_scales.size() != w.n) raise(Errc::kCorruptTensor, "quantization section does not match columns");
  }
  return w;
}

BenchResult base_row(const BenchConfig& config, KernelKind kind, std::size_t workers) {
  BenchResult r;
  r.kernel = std::string(to_string(kind));
  r.backend = std::string(to_string(config.backend));
  r.dtype = std::string(to_string(kernel_dtype(kind)));
  r.workers = workers;
  r.reps = config.reps;
  r.warmup = config.warmup;
  r.seed = config.seed;
  return r;
}

struct GemmInputs {
  Matrix<bf16> bf16_input;
  QuantizedActivations int8_input;
};

BenchResult run_gemm_point(const BenchConfig& config, KernelKind kind, WeightSet& weights, std::size_t m,
                           const GemmInputs& inputs, std::size_t workers) {
  BenchResult r = base_row(config, kind, workers);
  r.shape = weights.name;
  r.m = m;
  r.k = weights.k;
  r.n = weights.n;
  r.sparsity = weights.sparsity;
  r.v_sparsity = 0.0;
  r.nnz = weights.nnz();
  r.dense_bytes = bytes_read_model(weights.k, weights.n, kernel_dtype(kind));
  r.throughput_unit = "GFLOP/s";
  const Backend backend = config.backend;

  Timing t;
  switch (kind) {
    case KernelKind::kDense: {
      const auto& tiled = weights.bf16_tiled();
      const auto plan = GemmPlan::create(m, weights.k, weights.n, workers, TileLayout::bf16_tiles(), backend);
      auto out = dense_gemm(inputs.bf16_input, tiled, plan);
      inject(config, out);
      check_bf16_accuracy(inputs.bf16_input, *weights.bf16_weights, out);
      r.checksum = checksum(out.flat());
      r.modeled_bytes = r.dense_bytes;
      t = time_calls([&] { (void)dense_gemm(inputs.bf16_input, tiled, plan); }, config.warmup, config.reps);
      break;
    }
    case KernelKind::kSparse: {
      const auto& packed = weights.packed(TileLayout::bf16_tiles(), workers);
      const auto plan = GemmPlan::for_weights(m, packed, workers, backend);
      auto out = sparse_gemm(inputs.bf16_input, packed, plan);
      inject(config, out);
      const auto dense_plan = GemmPlan::create(m, weights.k, weights.n, workers, TileLayout::bf16_tiles(), backend);
      require(bits_equal(out, dense_gemm(inputs.bf16_input, weights.bf16_tiled(), dense_plan)),
              "sparse output differs from the dense kernel");
      check_bf16_accuracy(inputs.bf16_input, *weights.bf16_weights, out);
      r.checksum = checksum(out.flat());
      r.modeled_bytes = bytes_read_model(packed);
      t = time_calls([&] { (void)sparse_gemm(inputs.bf16_input, packed, plan); }, config.warmup, config.reps);
      break;
    }
    case KernelKind::kVectorSparse: {
      const auto& packed = weights.packed(TileLayout::bf16_vector(), workers);
      const std::size_t groups = config.neuron_groups;
      auto out = vector_sparse_gemm(inputs.bf16_input, packed, groups, backend);
      inject(config, out);
      // The lane-vector path has no matrix-unit variant; it matches the
      // dense kernel of the backend it actually runs on.
      const Backend effective = backend == Backend::kAmx ? Backend::kAvx512 : backend;
      r.backend = std::string(to_string(effective));
      const auto dense_plan = GemmPlan::create(m, weights.k, weights.n, workers, TileLayout::bf16_tiles(), effective);
      require(bits_equal(out, dense_gemm(inputs.bf16_input, weights.bf16_tiled(), dense_plan)),
              "vector sparse output differs from the dense kernel");
      check_bf16_accuracy(inputs.bf16_input, *weights.bf16_weights, out);
      r.checksum = checksum(out.flat());
      r.modeled_bytes = bytes_read_model(packed);
      t = time_calls([&] { (void)vector_sparse_gemm(inputs.bf16_input, packed, groups, backend); }, config.warmup,
                     config.reps);
      break;
    }
    case KernelKind::kInt8Dense:
    case KernelKind::kInt8Sparse: {
      const auto& x = inputs.int8_input;
      QuantParams params = weights.quant;
      params.activation_scale = x.scale;
      const auto expected = oracle::int_gemm(x.values, *weights.int8_weights);
      Matrix<std::int32_t> acc;
      std::function<Matrix<float>()> call;
      if (kind == KernelKind::kInt8Dense) {
        const auto& tiled = weights.int8_tiled();
        const auto plan = GemmPlan::create(m, weights.k, weights.n, workers, TileLayout::int8_tiles(), backend);
        acc = int8_dense_accumulate(x.values, tiled, plan);
        call = [&tiled, plan, &x, &params] { return int8_dense_gemm(x.values, tiled, params, plan); };
        r.modeled_bytes = r.dense_bytes;
      } else {
        const auto& packed = weights.packed(TileLayout::int8_tiles(), workers);
        const auto plan = GemmPlan::for_weights(m, packed, workers, backend);
        acc = int8_sparse_accumulate(x.values, packed, plan);
        call = [&packed, plan, &x, &params] { return int8_sparse_gemm(x.values, packed, params, plan); };
        r.modeled_bytes = bytes_read_model(packed);
      }
      for (std::size_t i = 0; i < acc.size(); ++i) {
        require(std::int64_t{acc.flat()[i]} == expected.flat()[i], "INT8 accumulator differs from the integer oracle");
      }
      auto out = call();
      inject(config, out);
      require(bits_equal(out, dequantize_accumulators(acc, params)), "dequantized output differs from accumulators");
      r.checksum = checksum(out.flat());
      t = time_calls([&] { (void)call(); }, config.warmup, config.reps);
      break;
    }
    case KernelKind::kAttention: raise(Errc::kInvalidArgument, "attention is not a GEMM kernel");
  }
  r.median_ns = t.median_ns;
  r.min_ns = t.min_ns;
  r.throughput = 2.0 * static_cast<double>(m * weights.k * weights.n) / t.median_ns;
  return r;
}

BenchResult run_attention_point(const BenchConfig& config, std::size_t context, double k_sparsity, double v_sparsity,
                                std::size_t workers) {
  BenchResult r = base_row(config, KernelKind::kAttention, workers);
  r.shape = "decode";
  r.heads = config.heads;
  r.kv_heads = config.kv_heads;
  r.head_dim = config.head_dim;
  r.context = context;
  r.sparsity = k_sparsity;
  r.v_sparsity = v_sparsity;
  r.throughput_unit = "tokens/s";
  const std::size_t hd = config.head_dim;

  std::vector<LayerKV> layers(1);
  for (std::size_t g = 0; g < config.kv_heads; ++g) {
    layers[0].k.push_back(uniform(context, hd, stream(config.seed, {3, context, hd, g})));
    layers[0].v.push_back(uniform(context, hd, stream(config.seed, {4, context, hd, g})));
  }
  const Matrix<float> q = uniform(config.heads, hd, stream(config.seed, {5, config.heads, hd}));
  const SparseKVCache cache = pack_kv(layers, config.heads, k_sparsity, v_sparsity);
  layers.clear();

  Matrix<float> probs;
  auto out = sparse_attention(q, cache, 0, &probs, config.backend);
  inject(config, out);
  for (std::size_t h = 0; h < probs.rows(); ++h) {
    double sum = 0.0;
    for (std::size_t t = 0; t < probs.cols(); ++t) sum += probs(h, t);
    require(std::fabs(sum - 1.0) <= std::ldexp(1.0, -20), "softmax row does not sum to 1");
  }
  {
    Matrix<double> qd(q.rows(), hd);
    for (std::size_t i = 0; i < q.size(); ++i) qd.flat()[i] = bf16::from_float(q.flat()[i]).to_float();
    std::vector<Matrix<double>> kd;
    std::vector<Matrix<double>> vd;
    for (std::size_t g = 0; g < config.kv_heads; ++g) {
      const auto& head = cache.head(0, g);
      const auto kt = unpack_weights<bf16>(*head.k_static);
      const auto vs = unpack_weights<bf16>(*head.v_static);
      Matrix<double> kg(context, hd);
      Matrix<double> vg(context, hd);
      for (std::size_t t = 0; t < context; ++t) {
        for (std::size_t d = 0; d < hd; ++d) {
          kg(t, d) = kt(d, t).to_float();
          vg(t, d) = vs(t, d).to_float();
        }
      }
      kd.push_back(std::move(kg));
      vd.push_back(std::move(vg));
    }
    const double err = oracle::attention_relative_error(qd, kd, vd, 1.0 / std::sqrt(static_cast<double>(hd)), out);
    require(err <= kBf16Tolerance, "attention relative error " + format_double("%.3g", err) + " exceeds 2^-8");
  }
  for (std::size_t g = 0; g < config.kv_heads; ++g) {
    r.nnz += cache.head(0, g).k_static->nnz() + cache.head(0, g).v_static->nnz();
  }
  r.modeled_bytes = cache.static_bytes() + cache.tail_bytes();
  r.dense_bytes = 2 * context * hd * config.kv_heads * sizeof(bf16);
  r.checksum = checksum(out.flat());
  const Timing t =
      time_calls([&] { (void)sparse_attention(q, cache, 0, nullptr, config.backend); }, config.warmup, config.reps);
  r.median_ns = t.median_ns;
  r.min_ns = t.min_ns;
  r.throughput = 1e9 / t.median_ns;
  return r;
}

std::string describe(const BenchResult& r) {
  std::ostringstream s;
  s << r.kernel << ' ';
  if (r.is_attention()) {
    s << "heads=" << r.heads << '/' << r.kv_heads << " d=" << r.head_dim << " ctx=" << r.context;
  } else {
    s << r.shape << " m=" << r.m << " k=" << r.k << " n=" << r.n;
  }
  s << " sparsity=" << format_double("%.3f", r.sparsity) << " workers=" << r.workers;
  return s.str();
}

}  // namespace

std::vector<BenchResult> run_bench(const BenchConfig& config, const std::function<void(const BenchResult&)>& on_row,
                                   std::ostream* log) {
  config.validate();
  if (!backend_available(config.backend)) {
    raise(Errc::kUnsupported, "backend " + std::string(to_string(config.backend)) + " is not available here");
  }
  std::vector<BenchResult> rows;
  std::size_t failures = 0;
  const int saved_threads = omp_get_max_threads();

  const auto emit = [&](const BenchResult& r) {
    if (log != nullptr) {
      *log << "[bench] " << describe(r) << ": median " << format_double("%.3f", r.median_ns / 1e6) << " ms\n";
    }
    rows.push_back(r);
    if (on_row) on_row(r);
  };
  const auto fail = [&](const std::string& what, const std::string& why) {
    ++failures;
    if (log != nullptr) *log << "[bench] " << what << ": validation failed: " << why << '\n';
  };

  std::vector<KernelKind> gemm_kernels;
  bool attention = false;
  for (KernelKind k : config.kernels) {
    if (k == KernelKind::kAttention) {
      attention = true;
    } else {
      gemm_kernels.push_back(k);
    }
  }

  const auto sweep_weights = [&](WeightSet& weights) {
    for (std::size_t m : config.m_values) {
      GemmInputs inputs;
      const Matrix<float> x = uniform(m, weights.k, stream(config.seed, {6, m, weights.k}));
      if (weights.bf16_weights) inputs.bf16_input = to_bf16(x);
      if (weights.int8_weights) inputs.int8_input = quantize_activations(x);
      for (KernelKind kind : gemm_kernels) {
        const bool int8 = kernel_dtype(kind) == Dtype::kINT8;
        if (int8 ? !weights.int8_weights : !weights.bf16_weights) {
          if (log != nullptr) *log << "[bench] skipping " << to_string(kind) << " for " << weights.name << '\n';
          continue;
        }
        for (std::size_t w : config.workers) {
          omp_set_num_threads(static_cast<int>(w));
          try {
            emit(run_gemm_point(config, kind, weights, m, inputs, w));
          } catch (const ValidationFailure& e) {
            fail(std::string(to_string(kind)) + ' ' + weights.name, e.what());
          }
        }
      }
    }
  };

  try {
    if (!gemm_kernels.empty()) {
      const bool need_bf16 = std::any_of(gemm_kernels.begin(), gemm_kernels.end(),
                                         [](KernelKind k) { return kernel_dtype(k) == Dtype::kBF16; });
      const bool need_int8 = std::any_of(gemm_kernels.begin(), gemm_kernels.end(),
                                         [](KernelKind k) { return kernel_dtype(k) == Dtype::kINT8; });
      if (!config.weight_files.empty()) {
        for (const auto& path : config.weight_files) {
          WeightSet weights = file_weights(path);
          sweep_weights(weights);
        }
      } else {
        for (const auto& shape : config.shapes) {
          for (double s : config.sparsities) {
            WeightSet weights = synthetic_weights(config, shape, s, need_bf16, need_int8);
            sweep_weights(weights);
          }
        }
      }
    }
    if (attention) {
      for (std::size_t ctx : config.contexts) {
        for (std::size_t i = 0; i < config.sparsities.size(); ++i) {
          const double ks = config.sparsities[i];
          const double vs = config.v_sparsities.empty() ? ks : config.v_sparsities[i];
          for (std::size_t w : config.workers) {
            omp_set_num_threads(static_cast<int>(w));
            try {
              emit(run_attention_point(config, ctx, ks, vs, w));
            } catch (const ValidationFailure& e) {
              fail("attention ctx=" + std::to_string(ctx), e.what());
            }
          }
        }
      }
    }
  } catch (...) {
    omp_set_num_threads(saved_threads);
    throw;
  }
  omp_set_num_threads(saved_threads);
  if (failures > 0) {
    raise(Errc::kValidation, std::to_string(failures) + " benchmark point(s) failed output validation");
  }
  return rows;
}

}  // namespace spx::tools
