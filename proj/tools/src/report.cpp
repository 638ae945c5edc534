// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/tools/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>

#include "spx/error.hpp"

namespace spx::tools {

namespace {

std::string baseline_kernel(const BenchResult& r) {
  if (r.kernel == "int8_dense" || r.kernel == "int8_sparse") return "int8_dense";
  if (r.kernel == "attention") return "attention";
  return "dense";
}

bool same_problem(const BenchResult& a, const BenchResult& b) {
  if (a.workers != b.workers) return false;
  if (a.is_attention()) {
    return a.heads == b.heads && a.kv_heads == b.kv_heads && a.head_dim == b.head_dim && a.context == b.context;
  }
  return a.shape == b.shape && a.m == b.m && a.k == b.k && a.n == b.n;
}

bool same_sparsity(double a, double b) { return std::fabs(a - b) < 5e-7; }

std::optional<std::size_t> find_baseline(const std::vector<BenchResult>& rows, const BenchResult& r) {
  const std::string kernel = baseline_kernel(r);
  std::optional<std::size_t> at_zero;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const BenchResult& b = rows[i];
    if (b.kernel != kernel || !same_problem(b, r)) continue;
    if (r.is_attention()) {
      // The dense reference of attention is the unpruned cache.
      if (same_sparsity(b.sparsity, 0.0) && same_sparsity(b.v_sparsity, 0.0)) return i;
      continue;
    }
    if (same_sparsity(b.sparsity, r.sparsity)) return i;
    if (!at_zero && same_sparsity(b.sparsity, 0.0)) at_zero = i;
  }
  return at_zero;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::vector<SpeedupRow> compute_speedups(const std::vector<BenchResult>& rows) {
  std::vector<SpeedupRow> out;
  out.reserve(rows.size());
  for (const BenchResult& r : rows) {
    const auto base = find_baseline(rows, r);
    if (!base) {
      raise(Errc::kMissingBaseline, "no " + baseline_kernel(r) + " row for " + r.kernel + " " +
                                        (r.is_attention() ? "context " + std::to_string(r.context) : r.shape) +
                                        " at sparsity " + fmt("%.3f", r.sparsity));
    }
    SpeedupRow s;
    s.row = r;
    s.baseline = *base;
    s.speedup = rows[*base].median_ns / r.median_ns;
    s.bytes_ratio = r.dense_bytes > 0 ? static_cast<double>(r.modeled_bytes) / static_cast<double>(r.dense_bytes) : 1.0;
    out.push_back(std::move(s));
  }
  return out;
}

void write_markdown(const std::vector<SpeedupRow>& rows, std::ostream& sink) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SpeedupRow*>> groups;
  for (const auto& s : rows) {
    auto& g = groups[s.row.kernel];
    if (g.empty()) order.push_back(s.row.kernel);
    g.push_back(&s);
  }
  bool first = true;
  for (const auto& kernel : order) {
    if (!first) sink << '\n';
    first = false;
    const bool attention = kernel == "attention";
    sink << "## " << kernel << "\n\n";
    if (attention) {
      sink << "| heads | kv heads | head dim | context | K sparsity | V sparsity | workers | median (us) | tokens/s "
              "| speedup | modeled bytes / dense |\n";
      sink << "|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    } else {
      sink << "| shape | m | k | n | sparsity | workers | backend | median (us) | GFLOP/s | speedup | modeled bytes / "
              "dense |\n";
      sink << "|---|---:|---:|---:|---:|---:|---|---:|---:|---:|---:|\n";
    }
    for (const SpeedupRow* s : groups[kernel]) {
      const BenchResult& r = s->row;
      if (attention) {
        sink << "| " << r.heads << " | " << r.kv_heads << " | " << r.head_dim << " | " << r.context << " | "
             << fmt("%.2f", r.sparsity) << " | " << fmt("%.2f", r.v_sparsity) << " | " << r.workers << " | "
             << fmt("%.1f", r.median_ns / 1e3) << " | " << fmt("%.1f", r.throughput) << " | "
             << fmt("%.2fx", s->speedup) << " | " << fmt("%.4f", s->bytes_ratio) << " |\n";
      } else {
        sink << "| " << r.shape << " | " << r.m << " | " << r.k << " | " << r.n << " | " << fmt("%.2f", r.sparsity)
             << " | " << r.workers << " | " << r.backend << " | " << fmt("%.1f", r.median_ns / 1e3) << " | "
             << fmt("%.2f", r.throughput) << " | " << fmt("%.2fx", s->speedup) << " | "
             << fmt("%.4f", s->bytes_ratio) << " |\n";
      }
    }
  }
}

std::vector<std::filesystem::path> write_plot_data(const std::vector<SpeedupRow>& rows,
                                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::ofstream> files;
  std::vector<std::filesystem::path> written;
  for (const auto& s : rows) {
    auto it = files.find(s.row.kernel);
    if (it == files.end()) {
      const auto path = dir / (s.row.kernel + ".dat");
      it = files.emplace(s.row.kernel, std::ofstream(path)).first;
      if (!it->second) raise(Errc::kIo, "cannot open " + path.string());
      it->second << "# shape sparsity m workers speedup bytes_ratio median_ns\n";
      written.push_back(path);
    }
    const BenchResult& r = s.row;
    const std::string shape = r.is_attention() ? "ctx" + std::to_string(r.context) : r.shape;
    it->second << shape << ' ' << fmt("%.6f", r.sparsity) << ' ' << r.m << ' ' << r.workers << ' '
               << fmt("%.6f", s.speedup) << ' ' << fmt("%.6f", s.bytes_ratio) << ' ' << fmt("%.1f", r.median_ns)
               << '\n';
  }
  for (auto& [name, f] : files) {
    f.close();
    if (!f) raise(Errc::kIo, "cannot finish writing plot data for " + name);
  }
  return written;
}

}  // namespace spx::tools
