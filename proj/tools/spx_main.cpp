// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

// spx: generate dense tensors, convert them to packed sparse files, run
// benchmark sweeps and summarize their CSV output.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spx/dense_io.hpp"
#include "spx/error.hpp"
#include "spx/kernel.hpp"
#include "spx/tools/bench.hpp"
#include "spx/tools/catalog.hpp"
#include "spx/tools/convert.hpp"
#include "spx/tools/report.hpp"

namespace {

using namespace spx;
using namespace spx::tools;

DenseDtype parse_dense_dtype(const std::string& s) {
  if (s == "bf16") return DenseDtype::kBF16;
  if (s == "int8") return DenseDtype::kINT8;
  if (s == "fp32") return DenseDtype::kFP32;
  raise(Errc::kInvalidArgument, "unknown dtype '" + s + "'");
}

Dtype parse_weight_dtype(const std::string& s) {
  if (s == "bf16") return Dtype::kBF16;
  if (s == "int8") return Dtype::kINT8;
  raise(Errc::kInvalidArgument, "weights are bf16 or int8, not '" + s + "'");
}

struct GenArgs {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string dtype = "bf16";
  std::uint64_t seed = 0;
  std::string out;
};

struct ConvertArgs {
  std::string input;
  std::string out;
  double sparsity = 0.0;
  std::string dtype = "bf16";
  std::optional<std::size_t> workers;
  bool vector_order = false;
};

struct BenchArgs {
  std::vector<std::string> kernels{"dense", "sparse"};
  std::string dtype;
  std::vector<std::size_t> m{1};
  std::optional<std::size_t> k;
  std::optional<std::size_t> n;
  std::string catalog;
  std::vector<std::string> weights;
  std::vector<double> sparsity{0.0};
  std::vector<double> v_sparsity;
  std::vector<std::size_t> workers;
  std::size_t reps = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> context{512};
  std::size_t heads = 32;
  std::size_t kv_heads = 8;
  std::size_t head_dim = 128;
  std::size_t groups = kDefaultNeuronGroups;
  std::string backend;
  std::string out;
};

struct ReportArgs {
  std::string input;
  std::string out;
  std::string plot_dir;
};

int run_gen(const GenArgs& a) {
  save_dense(random_dense(a.rows, a.cols, parse_dense_dtype(a.dtype), a.seed), a.out);
  std::cout << "wrote " << a.rows << "x" << a.cols << ' ' << a.dtype << " to " << a.out << '\n';
  return 0;
}

int run_convert(const ConvertArgs& a) {
  ConvertOptions options;
  options.sparsity = a.sparsity;
  options.dtype = parse_weight_dtype(a.dtype);
  options.workers = a.workers ? *a.workers : default_workers();
  options.vector_order = a.vector_order;
  const ConvertSummary s = convert_file(a.input, a.out, options);
  std::cout << a.out << ": " << s.rows << "x" << s.cols << ' ' << a.dtype << " nnz=" << s.nnz
            << " density=" << s.density() << " compressed_bytes=" << s.compressed_bytes
            << " dense_bytes=" << s.dense_bytes << " ratio=" << s.ratio() << " workers=" << options.workers << '\n';
  return 0;
}

int run_bench_cmd(const BenchArgs& a) {
  BenchConfig config;
  for (const auto& name : a.kernels) {
    auto kind = parse_kernel(name);
    if (!kind) raise(Errc::kInvalidArgument, "unknown kernel '" + name + "'");
    // --dtype int8 selects the INT8 variant of dense and sparse.
    if (a.dtype == "int8" && *kind == KernelKind::kDense) kind = KernelKind::kInt8Dense;
    if (a.dtype == "int8" && *kind == KernelKind::kSparse) kind = KernelKind::kInt8Sparse;
    if (!a.dtype.empty() && kernel_dtype(*kind) != parse_weight_dtype(a.dtype)) {
      raise(Errc::kInvalidArgument, "kernel '" + name + "' has no " + a.dtype + " variant");
    }
    config.kernels.push_back(*kind);
  }
  if (!a.catalog.empty()) config.shapes = shape_catalog(a.catalog);
  if (a.k || a.n) {
    if (!a.k || !a.n) raise(Errc::kInvalidArgument, "--k and --n go together");
    config.shapes.push_back({"custom", *a.k, *a.n});
  }
  for (const auto& w : a.weights) config.weight_files.emplace_back(w);
  config.m_values = a.m;
  config.sparsities = a.sparsity;
  config.v_sparsities = a.v_sparsity;
  config.workers = a.workers.empty() ? std::vector<std::size_t>{default_workers()} : a.workers;
  config.reps = a.reps;
  config.warmup = a.warmup;
  config.seed = a.seed;
  config.contexts = a.context;
  config.heads = a.heads;
  config.kv_heads = a.kv_heads;
  config.head_dim = a.head_dim;
  config.neuron_groups = a.groups;
  if (!a.backend.empty()) {
    const auto b = parse_backend(a.backend);
    if (!b) raise(Errc::kInvalidArgument, "unknown backend '" + a.backend + "'");
    config.backend = *b;
  }

  std::ofstream file;
  std::ostream* sink = &std::cout;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) raise(Errc::kIo, "cannot open " + a.out);
    sink = &file;
  }
  write_csv_header(*sink);
  run_bench(
      config,
      [&](const BenchResult& r) {
        write_csv_row(r, *sink);
        sink->flush();
      },
      &std::cerr);
  return 0;
}

int run_report(const ReportArgs& a) {
  std::ifstream in(a.input);
  if (!in) raise(Errc::kIo, "cannot open " + a.input);
  const auto rows = compute_speedups(read_csv(in));
  if (a.out.empty()) {
    write_markdown(rows, std::cout);
  } else {
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) raise(Errc::kIo, "cannot open " + a.out);
    write_markdown(rows, out);
  }
  if (!a.plot_dir.empty()) {
    for (const auto& p : write_plot_data(rows, a.plot_dir)) std::cerr << "wrote " << p.string() << '\n';
  }
  return 0;
}

int run_catalog(const std::string& name) {
  const auto names = name.empty() ? catalog_names() : std::vector<std::string_view>{name};
  for (auto n : names) {
    std::cout << n << ":\n";
    for (const auto& s : shape_catalog(n)) std::cout << "  " << s.name << ' ' << s.inner << 'x' << s.out << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spx: sparse weight packing and kernel benchmarks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a random dense tensor file");
  gen_cmd->add_option("--rows", gen.rows, "Rows")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--cols", gen.cols, "Columns")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dtype", gen.dtype, "bf16, int8 or fp32")->check(CLI::IsMember({"bf16", "int8", "fp32"}));
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output path")->required();

  ConvertArgs conv;
  auto* conv_cmd = app.add_subcommand("convert", "Prune and pack a dense tensor file into a .spx file");
  conv_cmd->add_option("--input", conv.input, "Dense input file")->required()->check(CLI::ExistingFile);
  conv_cmd->add_option("--out", conv.out, "Output .spx path")->required();
  conv_cmd->add_option("--sparsity", conv.sparsity, "Fraction of weights to prune")->check(CLI::Range(0.0, 1.0));
  conv_cmd->add_option("--dtype", conv.dtype, "bf16 or int8")->check(CLI::IsMember({"bf16", "int8"}));
  conv_cmd->add_option("--workers", conv.workers, "Worker partitions (default: SPARAMX_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  conv_cmd->add_flag("--vector", conv.vector_order, "Pack for the lane-vector kernel (bf16 only)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run a validated benchmark sweep and emit CSV");
  bench_cmd->add_option("--kernel", bench.kernels, "dense, sparse, vector_sparse, int8_dense, int8_sparse, attention")
      ->delimiter(',');
  bench_cmd->add_option("--dtype", bench.dtype, "bf16 or int8; int8 maps dense and sparse to their INT8 kernels")
      ->check(CLI::IsMember({"bf16", "int8"}));
  bench_cmd->add_option("--m", bench.m, "Batch sizes (rows of the input)")->delimiter(',');
  bench_cmd->add_option("--k", bench.k, "Inner dimension of a custom shape");
  bench_cmd->add_option("--n", bench.n, "Output dimension of a custom shape");
  bench_cmd->add_option("--catalog", bench.catalog, "Shape catalog (llama3-8b, llama3-8b-profile)");
  bench_cmd->add_option("--weights", bench.weights, ".spx files to benchmark instead of generated weights")
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("--sparsity", bench.sparsity, "Weight (or K cache) sparsities")->delimiter(',');
  bench_cmd->add_option("--v-sparsity", bench.v_sparsity, "V cache sparsities, paired with --sparsity")
      ->delimiter(',');
  bench_cmd->add_option("--workers", bench.workers, "Worker counts (default: SPARAMX_THREADS or all cores)")
      ->delimiter(',');
  bench_cmd->add_option("--reps", bench.reps, "Timed repetitions (>= 3)");
  bench_cmd->add_option("--warmup", bench.warmup, "Warmup iterations (>= 1)");
  bench_cmd->add_option("--seed", bench.seed, "Seed for generated inputs and weights");
  bench_cmd->add_option("--context", bench.context, "Attention context lengths")->delimiter(',');
  bench_cmd->add_option("--heads", bench.heads, "Attention query heads");
  bench_cmd->add_option("--kv-heads", bench.kv_heads, "Attention KV heads");
  bench_cmd->add_option("--head-dim", bench.head_dim, "Attention head dimension");
  bench_cmd->add_option("--groups", bench.groups, "Neuron groups of the vector kernel");
  bench_cmd->add_option("--backend", bench.backend, "portable, avx512 or amx (default: best available)");
  bench_cmd->add_option("--out", bench.out, "CSV output path (default: stdout)");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Summarize a bench CSV as markdown speedup tables");
  report_cmd->add_option("--input", report.input, "Bench CSV")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report.out, "Markdown output path (default: stdout)");
  report_cmd->add_option("--plot-dir", report.plot_dir, "Directory for per-kernel plot data");

  std::string catalog_name;
  auto* catalog_cmd = app.add_subcommand("catalog", "List the built-in shape catalogs");
  catalog_cmd->add_option("name", catalog_name, "Catalog to show");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*conv_cmd) return run_convert(conv);
    if (*bench_cmd) return run_bench_cmd(bench);
    if (*report_cmd) return run_report(report);
    if (*catalog_cmd) return run_catalog(catalog_name);
  } catch (const spx::Error& e) {
    std::cerr << "spx: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "spx: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
