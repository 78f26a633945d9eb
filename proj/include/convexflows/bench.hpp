#pragma once

// Timing harness over generated instances; one row per (size, trial).

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "convexflows/generators.hpp"
#include "convexflows/solver.hpp"

namespace convexflows {

struct BenchRow {
  std::string kind;
  std::size_t size = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double time_s = 0.0;
  int iterations = 0;
  bool solved = false;
  double relative_gap = kInf;
};

inline ProblemInstance bench_instance(const std::string& kind, std::size_t size,
                                      std::uint64_t seed) {
  if (kind == "opf") return gen_opf(size, seed);
  if (kind == "cfmm") return gen_cfmm(size, seed);
  throw ValidationError("bench supports opf and cfmm, not '" + kind + "'");
}

// Instance generation is excluded from the timing.
inline std::vector<BenchRow> run_bench(const std::string& kind,
                                       const std::vector<std::size_t>& sizes, int trials,
                                       const SolverConfig& cfg = {},
                                       std::uint64_t base_seed = 1) {
  if (trials < 1) throw ValidationError("bench needs at least one trial");
  std::vector<BenchRow> rows;
  for (std::size_t size : sizes) {
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(t);
      const ProblemInstance inst = bench_instance(kind, size, seed);
      const auto t0 = std::chrono::steady_clock::now();
      const SolveResult r = solve(inst, cfg);
      const double dt =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows.push_back({kind, size, t, seed, dt, r.iterations, r.solved, r.relative_gap});
    }
  }
  return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "kind,size,trial,seed,time_s,iterations,solved,relative_gap\n";
  for (const BenchRow& r : rows) {
    os << r.kind << ',' << r.size << ',' << r.trial << ',' << r.seed << ',' << r.time_s << ','
       << r.iterations << ',' << (r.solved ? 1 : 0) << ',' << r.relative_gap << '\n';
  }
}

inline double median_time(const std::vector<BenchRow>& rows, std::size_t size) {
  std::vector<double> t;
  for (const BenchRow& r : rows) {
    if (r.size == size) t.push_back(r.time_s);
  }
  if (t.empty()) return 0.0;
  std::sort(t.begin(), t.end());
  const std::size_t h = t.size() / 2;
  return t.size() % 2 ? t[h] : 0.5 * (t[h - 1] + t[h]);
}

}  // namespace convexflows
