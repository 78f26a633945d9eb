// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "convexflows/convexflows.hpp"
#include "validation/oracles.hpp"

namespace cf = convexflows;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fixture_path(const std::string& name) {
  return std::string(CF_FIXTURE_DIR) + "/" + name;
}

cf::ProblemInstance fixture(const std::string& name) {
  std::ifstream in(fixture_path(name));
  std::ostringstream ss;
  ss << in.rdbuf();
  return cf::parse_instance(ss.str());
}

cf::SolverConfig config(double grad_tol = 1e-7) {
  cf::SolverConfig cfg;
  cfg.grad_tol = grad_tol;
  return cfg;
}

cf::DualPoint at_prices(const cf::ProblemInstance& inst, const cf::Vec& nu) {
  cf::DualPoint mu{nu, {}};
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    mu.eta.push_back(cf::scatter_prices(nu, inst.edge(i).incidence));
  }
  return mu;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------------ 1

Outcome maxflow_equivalence() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst_gap = 0.0;
  int mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const std::size_t n = 2 + seed % 19;
    const double density = 0.1 + 0.05 * static_cast<double>(seed % 7);
    const auto inst = cf::gen_maxflow(n, density, seed);
    const double want = cfval::maxflow_oracle(inst);
    const auto r = cf::solve(inst, config());
    const bool ok = r.solved && std::round(r.primal_value) == want &&
                    std::round(r.dual_value) == want && r.relative_gap <= 1e-7 &&
                    r.relative_gap >= -1e-7;
    if (!ok) ++mismatches;
    worst_gap = std::max(worst_gap, std::abs(r.relative_gap));
  }
  const double dt = seconds_since(t0);
  o.pass = mismatches == 0 && dt < 10.0;
  o.detail = fmt("%d/50 mismatches, worst |rel gap| %.2e, %.2f s", mismatches, worst_gap, dt);
  return o;
}

// ------------------------------------------------------------------ 2

Outcome opf_loss_anchors() {
  // Fractional loss of the logarithmic line model, written out directly.
  auto loss = [](double w) {
    const double a = 16.0, b = 0.25;
    return a * (std::log1p(std::exp(b * w)) - std::log(2.0)) - 2.0 * w;
  };
  const double l1 = loss(1.0) / 1.0, l3 = loss(3.0) / 3.0;
  const cf::OpfLineGain g(16.0, 0.25, 3.0);
  const bool agree = std::abs(g.loss(1.0) - loss(1.0)) <= 1e-12 &&
                     std::abs(g.loss(3.0) - loss(3.0)) <= 1e-12;
  Outcome o;
  o.pass = agree && l1 >= 0.10 && l1 <= 0.14 && l3 >= 0.33 && l3 <= 0.40;
  o.detail = fmt("l(1)/1 = %.4f, l(3)/3 = %.4f, library agrees: %s", l1, l3, agree ? "yes" : "no");
  return o;
}

// ------------------------------------------------------------------ 3

Outcome opf_solve() {
  Outcome o;
  double worst_pg = 0.0, worst_res = 0.0, worst_t = 0.0, worst_rise = 0.0;
  int worst_it = 0;
  bool monotone = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = cf::gen_opf(100, seed);
    const auto t0 = Clock::now();
    const auto r = cf::solve(inst, config(1e-9));
    worst_t = std::max(worst_t, seconds_since(t0));
    const auto& rows = r.trace.rows;
    if (rows.empty()) return {false, "empty trace"};
    // Best-so-far g never rises, and the returned point is the best iterate
    // up to round-off. Single accepted steps may rise by round-off only.
    double best = cf::kInf, last_best = cf::kInf;
    for (const auto& row : rows) {
      best = std::min(best, row.g);
      if (best > last_best) monotone = false;
      last_best = best;
      worst_rise = std::max(worst_rise, (row.g - best) / (1.0 + std::abs(best)));
    }
    if (r.dual_value - best > 1e-13 * (1.0 + std::abs(best))) monotone = false;
    worst_pg = std::max(worst_pg, rows.back().pg_norm / std::max(1.0, std::abs(rows.back().g)));
    worst_res = std::max(worst_res, rows.back().primal_residual);
    worst_it = std::max(worst_it, r.iterations);
  }
  o.pass = worst_pg <= 1e-7 && worst_it <= 1000 && monotone && worst_rise <= 1e-12 &&
           worst_res <= 1e-6 && worst_t < 5.0;
  o.detail = fmt("rel pg %.2e, max iter %d, best-so-far monotone %s (largest step rise %.1e), "
                 "residual %.2e, slowest %.2f s",
                 worst_pg, worst_it, monotone ? "yes" : "no", worst_rise, worst_res, worst_t);
  return o;
}

// ------------------------------------------------------------------ 4

Outcome closed_form_vs_bisection() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> price(0.0, 3.0), cap(0.1, 5.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double e1 = price(rng), e2 = price(rng), b = cap(rng);
    const cf::OpfLineGain g(16.0, 0.25, b);
    cf::EvalOptions opts;
    opts.use_shortcuts = false;
    const double wc = cf::opf_arbitrage(16.0, 0.25, b, e1, e2).w;
    const double wb = cf::solve_scalar_arbitrage(g, e1, e2, opts).w;
    worst = std::max(worst, std::abs(wc - wb));
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-8 && dt < 1.0, fmt("max |dw| %.2e over 10^4 samples, %.3f s", worst, dt)};
}

// ------------------------------------------------------------------ 5

Outcome cfmm_arbitrage() {
  double worst_neg = 0.0, worst_gap = 0.0, worst_t = 0.0;
  bool all_solved = true;
  for (bool penalty : {false, true}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto inst = cf::gen_cfmm(100, seed, penalty);
      const auto t0 = Clock::now();
      const auto r = cf::solve(inst, config(1e-11));
      worst_t = std::max(worst_t, seconds_since(t0));
      all_solved = all_solved && r.solved;
      for (double y : r.primal.net_flow) worst_neg = std::min(worst_neg, y);
      worst_gap = std::max(worst_gap, std::abs(r.relative_gap));
    }
  }
  return {all_solved && worst_neg >= -1e-7 && worst_gap <= 1e-6 && worst_t < 5.0,
          fmt("min y %.2e, worst |rel gap| %.2e, slowest %.2f s", worst_neg, worst_gap, worst_t)};
}

// ------------------------------------------------------------------ 6

Outcome brute_force() {
  const auto t0 = Clock::now();
  Outcome o;
  for (const char* name : {"two_uniswap.json", "three_asset_pool.json"}) {
    const auto inst = fixture(name);
    const auto r = cf::solve(inst, config(1e-9));
    const double bf = cfval::brute_force_primal(inst, 201, 6).value;
    const bool ok = r.primal_value >= bf - 1e-3 && r.gap <= 1e-6 && r.gap >= -1e-6;
    o.pass = o.pass && ok;
    o.detail += fmt("%s primal %.6f brute %.6f gap %.1e; ", name, r.primal_value, bf, r.gap);
  }
  const double dt = seconds_since(t0);
  o.pass = o.pass && dt < 30.0;
  o.detail += fmt("%.2f s", dt);
  return o;
}

// ------------------------------------------------------------------ 7

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 2.0), slack(0.05, 1.0);
  std::vector<cf::ProblemInstance> insts;
  for (std::uint64_t s = 1; s <= 3; ++s) insts.push_back(cf::gen_opf(10, s));
  insts.push_back(fixture("two_uniswap.json"));
  insts.push_back(cf::gen_cfmm(12, 5, true));
  for (const char* f : {"fisher_3x3.json", "fisher_4x4.json"}) insts.push_back(fixture(f));
  int checked = 0, failed = 0, skipped = 0;
  double worst = 0.0;
  for (int k = 0; checked < 100 && k < 1000; ++k) {
    const auto& inst = insts[static_cast<std::size_t>(k) % insts.size()];
    cf::Vec nu = inst.objective().lower_bounds();
    for (double& x : nu) x += u(rng);
    for (const auto& f : inst.objective().fixed_coordinates()) nu[f.index] = f.value;
    cf::DualPoint mu = at_prices(inst, nu);
    for (std::size_t i = 0; i < inst.num_edges(); ++i) {
      if (!inst.edge(i).utility) continue;
      for (double& e : mu.eta[i]) e += slack(rng);
    }
    const auto rep = cfval::fd_gradient_check(inst, mu, 1e-6, 1e-5);
    if (rep.skipped) {
      ++skipped;
      continue;
    }
    ++checked;
    if (!rep.pass) ++failed;
    worst = std::max(worst, rep.max_rel_error);
  }
  const double dt = seconds_since(t0);
  return {checked == 100 && failed == 0 && dt < 10.0,
          fmt("%d points, %d failed, %d nonsmooth skipped, max rel err %.2e, %.2f s", checked,
              failed, skipped, worst, dt)};
}

// ------------------------------------------------------------------ 8

Outcome recovery() {
  const auto inst = fixture("parallel_ties.json");
  const auto r = cf::solve(inst, config());
  try {
    const auto rec = cf::restore_primal(inst, r.dual, 1e-8);
    bool members = true;
    for (std::size_t i = 0; i < inst.num_edges(); ++i) {
      members = members && inst.edge(i).oracle->is_member(rec.flows[i], 1e-12);
    }
    return {rec.residual <= 1e-8 && members,
            fmt("residual %.2e, members %s", rec.residual, members ? "yes" : "no")};
  } catch (const cf::RecoveryError& e) {
    return {false, e.what()};
  }
}

// ------------------------------------------------------------------ 9

Outcome zero_edge_path() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int count = 0;
  bool ok = true;
  for (const auto& entry : std::filesystem::directory_iterator(CF_FIXTURE_DIR)) {
    const auto inst = fixture(entry.path().filename().string());
    if (!inst.zero_edge_utilities()) continue;
    ++count;
    auto full = config(1e-9), reduced = config(1e-9);
    full.reduce_zero_edge = false;
    reduced.reduce_zero_edge = true;
    const auto a = cf::solve(inst, full), b = cf::solve(inst, reduced);
    ok = ok && a.solved && b.solved && b.zero_edge_path && !a.zero_edge_path;
    worst = std::max(worst, std::abs(a.dual_value - b.dual_value) /
                                std::max(1.0, std::abs(a.dual_value)));
  }
  const double dt = seconds_since(t0);
  return {ok && count > 0 && worst <= 1e-7 && dt < 5.0,
          fmt("%d fixtures, max rel difference %.2e, %.2f s", count, worst, dt)};
}

// ------------------------------------------------------------------ 10

Outcome fisher_clearing() {
  Outcome o;
  for (const char* name :
       {"fisher_1x1.json", "fisher_2x2_symmetric.json", "fisher_3x3.json", "fisher_4x4.json"}) {
    const auto inst = fixture(name);
    const auto r = cf::solve(inst, config(1e-9));
    const auto m = cfval::fisher_view(inst, r.primal.edge_flows, r.dual.nu);
    const auto rep = cfval::fisher_kkt_check(m.x, m.mu, m.b, m.v, 1e-6);
    o.pass = o.pass && rep.pass;
    o.detail += fmt("%s %s; ", name, rep.pass ? "ok" : "violated");
  }
  return o;
}

// ------------------------------------------------------------------ 11

Outcome scaling() {
  const std::vector<std::size_t> sizes{100, 400, 1600};
  const auto t0 = Clock::now();
  const auto rows = cf::run_bench("cfmm", sizes, 3);
  const double dt = seconds_since(t0);
  const double t_lo = cf::median_time(rows, 100), t_hi = cf::median_time(rows, 1600);
  const double slope = std::log(t_hi / t_lo) / std::log(16.0);
  bool solved = true;
  for (const auto& r : rows) solved = solved && r.solved;
  return {solved && slope < 2.0 && dt < 120.0,
          fmt("medians %.3f / %.3f / %.3f s, log-log slope %.2f, all solved %s, %.1f s total",
              t_lo, cf::median_time(rows, 400), t_hi, slope, solved ? "yes" : "no", dt)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"max-flow/min-cut equivalence", maxflow_equivalence},
      {"OPF loss anchors", opf_loss_anchors},
      {"OPF solve", opf_solve},
      {"closed form vs bisection", closed_form_vs_bisection},
      {"CFMM arbitrage", cfmm_arbitrage},
      {"brute-force equivalence", brute_force},
      {"gradient suite", gradient_suite},
      {"recovery", recovery},
      {"zero-edge fast path", zero_edge_path},
      {"Fisher clearing", fisher_clearing},
      {"scaling sanity", scaling},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
