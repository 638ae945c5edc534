// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spx/int8.hpp"
#include "spx/packed_io.hpp"
#include "spx/tools/bench.hpp"
#include "spx/tools/catalog.hpp"
#include "spx/tools/convert.hpp"
#include "spx/tools/report.hpp"
#include "test_support.hpp"

namespace spx::tools {
namespace {

namespace fs = std::filesystem;

class ScratchDir {
 public:
  ScratchDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("spx_tools_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::size_t formula_bytes(std::size_t padded, std::size_t nnz, std::size_t element, std::size_t workers) {
  return (padded + 7) / 8 + element * nnz + 4 * workers;
}

TEST(Catalog, ProjectionShapes) {
  const auto shapes = shape_catalog("llama3-8b");
  ASSERT_EQ(shapes.size(), 7u);
  EXPECT_EQ(shapes[0].name, "q_proj");
  EXPECT_EQ(shapes[4].inner, 4096u);
  EXPECT_EQ(shapes[4].out, 14336u);
  EXPECT_EQ(shapes[6].inner, 14336u);
  EXPECT_EQ(shapes[6].out, 4096u);
  const auto profile = shape_catalog("llama3-8b-profile");
  ASSERT_EQ(profile.size(), 2u);
  EXPECT_EQ(profile[0].inner, 4192u);
  SPX_EXPECT_ERRC(shape_catalog("gpt"), Errc::kInvalidArgument);
}

TEST(Convert, RatioAtHalfAndZeroSparsity) {
  const DenseTensor w = random_dense(512, 512, DenseDtype::kBF16, 3);
  for (double s : {0.0, 0.5}) {
    std::ostringstream sink;
    const auto summary = convert_tensor(w, {s, Dtype::kBF16, 1, false}, sink);
    EXPECT_EQ(summary.nnz, static_cast<std::size_t>(512 * 512 * (1.0 - s)));
    EXPECT_EQ(summary.compressed_bytes, formula_bytes(512 * 512, summary.nnz, 2, 1));
    EXPECT_EQ(summary.file_bytes, sink.str().size());
    EXPECT_NEAR(summary.ratio(), s == 0.0 ? 1.0625 : 0.5625, 1e-4);
  }
}

TEST(Convert, IdempotentOnPrunedInput) {
  const DenseTensor w = random_dense(96, 80, DenseDtype::kFP32, 4);
  std::ostringstream once;
  convert_tensor(w, {0.5, Dtype::kBF16, 2, false}, once);
  std::istringstream in(once.str());
  const auto pruned = unpack_weights<bf16>(load_packed(in));
  std::ostringstream twice;
  convert_tensor(DenseTensor{pruned}, {0.5, Dtype::kBF16, 2, false}, twice);
  EXPECT_EQ(once.str(), twice.str());
}

TEST(Convert, Int8WritesQuantSection) {
  const DenseTensor w = random_dense(128, 64, DenseDtype::kFP32, 5);
  std::ostringstream sink;
  const auto summary = convert_tensor(w, {0.25, Dtype::kINT8, 1, false}, sink);
  std::istringstream in(sink.str());
  const auto packed = load_packed(in);
  EXPECT_EQ(packed.dtype(), Dtype::kINT8);
  EXPECT_EQ(packed.nnz(), summary.nnz);
  const auto params = load_quant_section(in);
  ASSERT_TRUE(params.has_value());
  ASSERT_EQ(params->weight_scales.size(), 64u);
  const auto fp = to_fp32(w);
  for (std::size_t n = 0; n < 64; ++n) {
    float peak = 0.0f;
    for (std::size_t k = 0; k < 128; ++k) peak = std::max(peak, std::fabs(fp(k, n)));
    EXPECT_FLOAT_EQ(params->weight_scales[n], peak / 127.0f);
  }
  EXPECT_EQ(summary.file_bytes, sink.str().size());
}

TEST(Convert, RejectsMalformedAndMismatchedInput) {
  ScratchDir dir;
  const auto bad = dir.path() / "bad.raw";
  std::ofstream(bad) << "RAW0 not a tensor";
  SPX_EXPECT_ERRC(convert_file(bad, dir.path() / "out.spx", {}), Errc::kBadMagic);
  const auto truncated = dir.path() / "short.raw";
  {
    std::ostringstream full;
    save_dense(random_dense(8, 8, DenseDtype::kBF16, 1), full);
    std::ofstream(truncated, std::ios::binary) << full.str().substr(0, 40);
  }
  SPX_EXPECT_ERRC(convert_file(truncated, dir.path() / "out.spx", {}), Errc::kTruncated);
  std::ostringstream sink;
  SPX_EXPECT_ERRC(convert_tensor(random_dense(8, 8, DenseDtype::kINT8, 1), {}, sink), Errc::kUnsupported);
  SPX_EXPECT_ERRC(convert_tensor(random_dense(8, 8, DenseDtype::kFP32, 1), {0.0, Dtype::kINT8, 1, true}, sink),
                  Errc::kUnsupported);
}

TEST(Convert, FileRoundTrip) {
  ScratchDir dir;
  const auto raw = dir.path() / "w.raw";
  const auto spx = dir.path() / "w.spx";
  const DenseTensor w = random_dense(64, 48, DenseDtype::kBF16, 9);
  save_dense(w, raw);
  const auto summary = convert_file(raw, spx, {0.0, Dtype::kBF16, 1, false});
  EXPECT_EQ(fs::file_size(spx), summary.file_bytes);
  EXPECT_EQ(unpack_weights<bf16>(load_packed(spx)), std::get<Matrix<bf16>>(w));
}

TEST(Checksum, Fnv1a) {
  EXPECT_EQ(checksum({}), "cbf29ce484222325");
  // FNV-1a of the four bytes 00 00 80 3f.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : {0x00, 0x00, 0x80, 0x3f}) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char expect[17];
  std::snprintf(expect, sizeof(expect), "%016llx", static_cast<unsigned long long>(h));
  const float one = 1.0f;
  EXPECT_EQ(checksum({&one, 1}), expect);
  const float neg_zero = -0.0f;
  const float zero = 0.0f;
  EXPECT_NE(checksum({&neg_zero, 1}), checksum({&zero, 1}));
}

TEST(DefaultWorkers, HonorsEnvironment) {
  ::setenv("SPARAMX_THREADS", "3", 1);
  EXPECT_EQ(default_workers(), 3u);
  ::setenv("SPARAMX_THREADS", "0", 1);
  SPX_EXPECT_ERRC(default_workers(), Errc::kInvalidArgument);
  ::setenv("SPARAMX_THREADS", "4x", 1);
  SPX_EXPECT_ERRC(default_workers(), Errc::kInvalidArgument);
  ::unsetenv("SPARAMX_THREADS");
  EXPECT_GE(default_workers(), 1u);
}

BenchConfig small_config(std::vector<KernelKind> kernels) {
  BenchConfig c;
  c.kernels = std::move(kernels);
  c.shapes = {{"tiny", 96, 80}};
  c.m_values = {1, 3};
  c.sparsities = {0.0, 0.5};
  c.workers = {1, 2};
  c.reps = 3;
  c.warmup = 1;
  c.seed = 17;
  c.contexts = {1, 17};
  c.heads = 4;
  c.kv_heads = 2;
  c.head_dim = 32;
  return c;
}

TEST(Bench, ConfigInvariants) {
  auto c = small_config({KernelKind::kDense});
  c.reps = 2;
  SPX_EXPECT_ERRC(c.validate(), Errc::kInvalidArgument);
  c = small_config({KernelKind::kDense});
  c.warmup = 0;
  SPX_EXPECT_ERRC(c.validate(), Errc::kInvalidArgument);
  c = small_config({});
  SPX_EXPECT_ERRC(c.validate(), Errc::kInvalidArgument);
  c = small_config({KernelKind::kAttention});
  c.kv_heads = 3;
  SPX_EXPECT_ERRC(c.validate(), Errc::kInvalidArgument);
  c = small_config({KernelKind::kDense});
  c.sparsities = {1.5};
  SPX_EXPECT_ERRC(c.validate(), Errc::kInvalidArgument);
  EXPECT_NO_THROW(small_config({KernelKind::kDense}).validate());
}

class BenchOnBackend : public ::testing::TestWithParam<Backend> {};

TEST_P(BenchOnBackend, SparseVariantsShareTheDenseChecksum) {
  auto c = small_config({KernelKind::kDense, KernelKind::kSparse, KernelKind::kVectorSparse, KernelKind::kInt8Dense,
                         KernelKind::kInt8Sparse});
  c.backend = GetParam();
  const auto rows = run_bench(c);
  // shape x sparsity x m x kernels x workers
  ASSERT_EQ(rows.size(), 1u * 2 * 2 * 5 * 2);
  for (const auto& r : rows) {
    EXPECT_EQ(r.checksum.size(), 16u);
    EXPECT_GT(r.median_ns, 0.0);
    EXPECT_LE(r.min_ns, r.median_ns);
    for (const auto& other : rows) {
      if (other.m != r.m || other.sparsity != r.sparsity || other.dtype != r.dtype) continue;
      // The lane-vector kernel is the FP32 reference sequence, which the
      // matrix unit does not reproduce bit-for-bit.
      const bool mixed = (r.kernel == "vector_sparse") != (other.kernel == "vector_sparse");
      if (mixed && GetParam() == Backend::kAmx && r.dtype == "bf16") continue;
      EXPECT_EQ(r.checksum, other.checksum) << r.kernel << " vs " << other.kernel;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Backends, BenchOnBackend, ::testing::ValuesIn(testing::backends()),
                         [](const auto& info) { return testing::name(info.param); });

TEST(Bench, ModeledBytesDecreaseWithSparsity) {
  BenchConfig c;
  c.kernels = {KernelKind::kSparse};
  c.shapes = {{"gate_proj", 4096, 14336}};
  c.sparsities = {0.0, 0.5, 0.9};
  c.reps = 3;
  const auto rows = run_bench(c);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_GT(rows[0].modeled_bytes, rows[1].modeled_bytes);
  EXPECT_GT(rows[1].modeled_bytes, rows[2].modeled_bytes);
  for (const auto& r : rows) {
    EXPECT_EQ(r.modeled_bytes, formula_bytes(4096 * 14336, r.nnz, 2, 1));
    EXPECT_EQ(r.dense_bytes, 4096u * 14336u * 2u);
  }
}

TEST(Bench, FixedSeedReproducesNonTimingColumns) {
  auto c = small_config({KernelKind::kDense, KernelKind::kSparse, KernelKind::kAttention});
  const auto a = run_bench(c);
  const auto b = run_bench(c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    BenchResult x = a[i];
    BenchResult y = b[i];
    x.median_ns = y.median_ns = 0;
    x.min_ns = y.min_ns = 0;
    x.throughput = y.throughput = 0;
    std::ostringstream sx;
    std::ostringstream sy;
    write_csv_row(x, sx);
    write_csv_row(y, sy);
    EXPECT_EQ(sx.str(), sy.str());
  }
  c.seed = 18;
  EXPECT_NE(run_bench(c)[0].checksum, a[0].checksum);
}

TEST(Bench, AttentionRowsReportTokensPerSecond) {
  auto c = small_config({KernelKind::kAttention});
  c.sparsities = {0.0, 0.3};
  c.v_sparsities = {0.0, 0.5};
  c.workers = {1};
  const auto rows = run_bench(c);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.throughput_unit, "tokens/s");
    EXPECT_NEAR(r.throughput, 1e9 / r.median_ns, 1e-9 * r.throughput);
    EXPECT_EQ(r.dense_bytes, 2 * r.context * 32 * 2 * 2);
  }
  EXPECT_DOUBLE_EQ(rows[1].v_sparsity, 0.5);
}

TEST(Bench, ValidationFailureDropsThePoint) {
  auto c = small_config({KernelKind::kDense, KernelKind::kSparse});
  c.m_values = {1};
  c.sparsities = {0.5};
  c.workers = {1};
  int calls = 0;
  c.fault_injection = [&calls](Matrix<float>& out) {
    if (++calls == 2) out(0, 0) += 1.0f;
  };
  std::vector<std::string> emitted;
  try {
    run_bench(c, [&](const BenchResult& r) { emitted.push_back(r.kernel); });
    FAIL() << "expected a validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kValidation);
    EXPECT_EQ(std::string(e.what()).rfind("validation error", 0), 0u);
  }
  EXPECT_EQ(emitted, std::vector<std::string>{"dense"});

  c.kernels = {KernelKind::kInt8Dense};
  c.fault_injection = [](Matrix<float>& out) { out(0, 1) = -out(0, 1) + 1.0f; };
  SPX_EXPECT_ERRC(run_bench(c), Errc::kValidation);
  c.kernels = {KernelKind::kAttention};
  SPX_EXPECT_ERRC(run_bench(c), Errc::kValidation);
}

TEST(Bench, WeightFilesFromConvert) {
  ScratchDir dir;
  const DenseTensor w = random_dense(128, 96, DenseDtype::kFP32, 2);
  const auto raw = dir.path() / "proj.raw";
  save_dense(w, raw);
  convert_file(raw, dir.path() / "proj.spx", {0.5, Dtype::kBF16, 1, false});
  convert_file(raw, dir.path() / "proj8.spx", {0.5, Dtype::kINT8, 1, false});
  BenchConfig c;
  c.kernels = {KernelKind::kDense, KernelKind::kSparse, KernelKind::kInt8Dense, KernelKind::kInt8Sparse};
  c.weight_files = {dir.path() / "proj.spx", dir.path() / "proj8.spx"};
  c.workers = {1, 3};
  c.reps = 3;
  const auto rows = run_bench(c);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].shape, "proj");
  EXPECT_DOUBLE_EQ(rows[0].sparsity, 0.5);
  EXPECT_EQ(rows[0].checksum, rows[2].checksum);
  EXPECT_EQ(rows[4].shape, "proj8");
  EXPECT_EQ(rows[4].checksum, rows[6].checksum);
}

TEST(Csv, RoundTripAndMalformedInput) {
  auto c = small_config({KernelKind::kDense, KernelKind::kAttention});
  c.m_values = {1};
  c.workers = {1};
  const auto rows = run_bench(c);
  std::stringstream csv;
  write_csv_header(csv);
  for (const auto& r : rows) write_csv_row(r, csv);
  const auto back = read_csv(csv);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::ostringstream a;
    std::ostringstream b;
    write_csv_row(rows[i], a);
    write_csv_row(back[i], b);
    EXPECT_EQ(a.str(), b.str());
  }
  std::istringstream wrong_header("kernel,m\n");
  SPX_EXPECT_ERRC(read_csv(wrong_header), Errc::kInvalidArgument);
  std::istringstream short_row(std::string(kCsvHeader) + "\ndense,x,amx\n");
  SPX_EXPECT_ERRC(read_csv(short_row), Errc::kInvalidArgument);
}

BenchResult gemm_row(const std::string& kernel, double sparsity, double median_ns) {
  BenchResult r;
  r.kernel = kernel;
  r.shape = "q_proj";
  r.m = 1;
  r.k = 4096;
  r.n = 4096;
  r.workers = 1;
  r.sparsity = sparsity;
  r.median_ns = median_ns;
  r.dense_bytes = 100;
  r.modeled_bytes = kernel == "dense" ? 100 : 56;
  return r;
}

TEST(Report, SingleDenseRowIsItsOwnBaseline) {
  const auto s = compute_speedups({gemm_row("dense", 0.0, 1000.0)});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].speedup, 1.0);
  EXPECT_DOUBLE_EQ(s[0].bytes_ratio, 1.0);
}

TEST(Report, HandComputedThreeRowRatios) {
  // Dense at 0 and 0.5, sparse at 0.5: the sparse row pairs with the dense
  // row of equal sparsity, 1200 / 800 = 1.5.
  const std::vector<BenchResult> rows{gemm_row("dense", 0.0, 1000.0), gemm_row("dense", 0.5, 1200.0),
                                      gemm_row("sparse", 0.5, 800.0)};
  const auto s = compute_speedups(rows);
  EXPECT_EQ(s[2].baseline, 1u);
  EXPECT_DOUBLE_EQ(s[2].speedup, 1.5);
  EXPECT_DOUBLE_EQ(s[2].bytes_ratio, 0.56);
  std::ostringstream md;
  write_markdown(s, md);
  EXPECT_NE(md.str().find("## sparse"), std::string::npos);
  EXPECT_NE(md.str().find("1.50x"), std::string::npos);
}

TEST(Report, FallsBackToZeroSparsityBaseline) {
  const auto s = compute_speedups({gemm_row("dense", 0.0, 1000.0), gemm_row("sparse", 0.9, 400.0)});
  EXPECT_EQ(s[1].baseline, 0u);
  EXPECT_DOUBLE_EQ(s[1].speedup, 2.5);
}

TEST(Report, MissingBaseline) {
  SPX_EXPECT_ERRC(compute_speedups({gemm_row("sparse", 0.5, 800.0)}), Errc::kMissingBaseline);
  auto int8 = gemm_row("int8_sparse", 0.5, 800.0);
  SPX_EXPECT_ERRC(compute_speedups({gemm_row("dense", 0.5, 1000.0), int8}), Errc::kMissingBaseline);
  BenchResult attn;
  attn.kernel = "attention";
  attn.context = 17;
  attn.sparsity = 0.3;
  attn.median_ns = 10.0;
  SPX_EXPECT_ERRC(compute_speedups({attn}), Errc::kMissingBaseline);
  BenchResult base = attn;
  base.sparsity = 0.0;
  base.median_ns = 20.0;
  EXPECT_DOUBLE_EQ(compute_speedups({base, attn})[1].speedup, 2.0);
}

TEST(Report, PlotData) {
  ScratchDir dir;
  const auto s = compute_speedups({gemm_row("dense", 0.0, 1000.0), gemm_row("sparse", 0.0, 500.0)});
  const auto files = write_plot_data(s, dir.path() / "plots");
  ASSERT_EQ(files.size(), 2u);
  std::ifstream in(dir.path() / "plots" / "sparse.dat");
  std::string header;
  std::string line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(line, "q_proj 0.000000 1 1 2.000000 0.560000 500.0");
}

}  // namespace
}  // namespace spx::tools
