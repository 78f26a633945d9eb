#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "convexflows/common.hpp"
#include "convexflows/core.hpp"
#include "convexflows/dual.hpp"
#include "convexflows/fisher_edge.hpp"
#include "convexflows/lbfgsb.hpp"
#include "convexflows/objectives.hpp"
#include "convexflows/parallel.hpp"
#include "convexflows/recovery.hpp"

namespace convexflows {

struct SolverConfig {
  double grad_tol = 1e-7;
  int max_iter = 1000;
  int memory = 10;
  double shrink = 0.5;
  std::size_t threads = default_threads();
  bool use_shortcuts = true;
  // Slack allowed on indicator constraints when scoring a primal point.
  double feas_tol = 1e-6;
  // Relative duality gap accepted as solved when the gradient test fails
  // (nonsmooth duals rarely drive the projected gradient to zero).
  double gap_tol = 1e-6;
  double recovery_tol = 1e-6;
  bool round_cuts = true;
  // Use the reduced dual over nu alone when no edge has a utility.
  bool reduce_zero_edge = true;
  // Refine unconverged nonsmooth zero-edge duals on their tie pattern.
  bool polish = true;

  void validate() const {
    if (!(grad_tol > 0.0) || max_iter <= 0 || memory <= 0 || !(shrink > 0.0 && shrink < 1.0) ||
        threads == 0 || !(feas_tol > 0.0) || !(gap_tol > 0.0) || !(recovery_tol > 0.0)) {
      throw ValidationError("solver settings must be positive (shrink in (0,1))");
    }
  }
};

struct TraceRow {
  int iter = 0;
  double g = kInf;
  double pg_norm = kInf;
  double primal_residual = kInf;
  double gap = kInf;
  double time_s = 0.0;
  bool smooth = true;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
  bool nonsmooth = false;

  void write_csv(std::ostream& os) const {
    os << "iter,g,pg_norm,primal_residual,gap,time_s\n";
    const auto old = os.precision(std::numeric_limits<double>::max_digits10);
    for (const TraceRow& r : rows) {
      os << r.iter << ',' << r.g << ',' << r.pg_norm << ',' << r.primal_residual << ','
         << r.gap << ',' << r.time_s << '\n';
    }
    os.precision(old);
  }
};

// ||y* - sum A xt||_inf when the net-flow maximizer is unique, otherwise the
// distance of the routed flow from the objective's implicit constraints.
inline double primal_residual(const ProblemInstance& inst, const TransformedEval& at) {
  if (!at.finite()) return kInf;
  if (at.net.unique) {
    double r = 0.0;
    for (std::size_t j = 0; j < at.routed.size(); ++j) {
      r = std::max(r, std::abs(at.net.maximizer[j] - at.routed[j]));
    }
    return r;
  }
  return inst.objective().domain_violation(at.routed);
}

// Objective of the primal candidate formed by the arbitrage maximizers.
inline double routed_primal_value(const ProblemInstance& inst, const TransformedEval& at,
                                  double tol) {
  if (!at.finite()) return -kInf;
  double p = inst.objective().evaluate_primal(at.routed, tol);
  for (std::size_t i = 0; i < inst.num_edges() && p > -kInf; ++i) {
    const Edge& e = inst.edge(i);
    if (e.utility) p += e.utility->evaluate_primal(at.edges[i].x, tol);
  }
  return p;
}

inline double duality_gap(const ProblemInstance& inst, const DualPoint& mu,
                          const PrimalPoint& p, double tol = 1e-6) {
  const double g = eval_dual(inst, mu).value;
  const double v = primal_objective(inst, p, tol);
  if (v == -kInf || !std::isfinite(g)) return kInf;
  return g - v;
}

inline double relative_gap(double gap, double g) { return gap / (1.0 + std::abs(g)); }

// Variable vector of the quasi-Newton driver: the non-fixed prices, then
// (optionally) eta~ for every edge. Edges without a utility keep eta~ in
// the vector but boxed to [0, 0].
class DualLayout {
 public:
  DualLayout(const ProblemInstance& inst, bool with_eta) : inst_(inst), with_eta_(with_eta) {
    const std::size_t n = inst.num_nodes();
    fixed_.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (const FixedCoordinate& f : inst.objective().fixed_coordinates()) {
      if (f.index >= n) throw DimensionError("fixed coordinate out of range");
      fixed_[f.index] = f.value;
    }
    const Vec lb = inst.objective().lower_bounds();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(fixed_[j])) {
        free_.push_back(j);
        lower_.push_back(lb[j]);
        upper_.push_back(kInf);
      }
    }
    if (with_eta_) {
      for (const Edge& e : inst.edges()) {
        eta_off_.push_back(lower_.size());
        for (std::size_t k = 0; k < e.incidence.size(); ++k) {
          lower_.push_back(0.0);
          upper_.push_back(e.utility ? kInf : 0.0);
        }
      }
    }
  }

  std::size_t size() const { return lower_.size(); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  bool with_eta() const { return with_eta_; }

  Vec nu(std::span<const double> v) const {
    Vec out(fixed_);
    for (std::size_t k = 0; k < free_.size(); ++k) out[free_[k]] = v[k];
    return out;
  }

  std::vector<Vec> eta_tilde(std::span<const double> v) const {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < eta_off_.size(); ++i) {
      const std::size_t len = inst_.edge(i).incidence.size();
      out.emplace_back(v.begin() + eta_off_[i], v.begin() + eta_off_[i] + len);
    }
    return out;
  }

  Vec pack(std::span<const double> nu, const std::vector<Vec>* et) const {
    Vec v(size(), 0.0);
    for (std::size_t k = 0; k < free_.size(); ++k) v[k] = nu[free_[k]];
    if (with_eta_ && et) {
      for (std::size_t i = 0; i < eta_off_.size(); ++i) {
        std::copy((*et)[i].begin(), (*et)[i].end(), v.begin() + eta_off_[i]);
      }
    }
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::clamp(v[k], lower_[k], upper_[k]);
    return v;
  }

  void gradient(const TransformedEval& at, std::span<double> g) const {
    for (std::size_t k = 0; k < free_.size(); ++k) g[k] = at.grad_nu[free_[k]];
    if (with_eta_) {
      for (std::size_t i = 0; i < eta_off_.size(); ++i) {
        std::copy(at.grad_eta[i].begin(), at.grad_eta[i].end(), g.begin() + eta_off_[i]);
      }
    }
  }

 private:
  const ProblemInstance& inst_;
  bool with_eta_;
  Vec fixed_;
  std::vector<std::size_t> free_;
  std::vector<std::size_t> eta_off_;
  Vec lower_;
  Vec upper_;
};

struct DualSolve {
  DualPoint point;
  TransformedEval at;
  LbfgsbResult run;
  ConvergenceTrace trace;
};

namespace detail {

inline std::string describe_infinite_start(const ProblemInstance& inst,
                                           std::span<const double> nu,
                                           const std::vector<Vec>* et) {
  if (!std::isfinite(inst.objective().conj(nu).value)) {
    return "net-flow conjugate is +inf at the start prices";
  }
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    const Edge& e = inst.edge(i);
    Vec eta = scatter_prices(nu, e.incidence);
    if (et) {
      for (std::size_t k = 0; k < eta.size(); ++k) eta[k] += (*et)[i][k];
    }
    const EdgeEval ev = e.oracle->evaluate(eta);
    if (!std::isfinite(ev.value) || !ev.attained) {
      return "edge " + std::to_string(i) + " support function is unbounded at the start";
    }
  }
  return "an edge utility conjugate is +inf at the start";
}

inline DualSolve run_dual(const ProblemInstance& inst, const DualLayout& layout, Vec v0,
                          const SolverConfig& cfg) {
  cfg.validate();
  const EvalOptions opts{cfg.use_shortcuts};
  const auto t0 = std::chrono::steady_clock::now();

  Vec cached_x;
  TransformedEval cached;
  bool have_cache = false;
  auto evaluate = [&](std::span<const double> x) -> const TransformedEval& {
    if (have_cache && cached_x.size() == x.size() &&
        std::equal(x.begin(), x.end(), cached_x.begin())) {
      return cached;
    }
    const Vec nu = layout.nu(x);
    if (layout.with_eta()) {
      const std::vector<Vec> et = layout.eta_tilde(x);
      cached = eval_transformed(inst, nu, &et, opts, cfg.threads);
    } else {
      cached = eval_transformed(inst, nu, nullptr, opts, cfg.threads);
    }
    cached_x.assign(x.begin(), x.end());
    have_cache = true;
    return cached;
  };

  BoxObjective fun = [&](std::span<const double> x, std::span<double> grad) {
    const TransformedEval& at = evaluate(x);
    if (!at.finite()) return kInf;
    layout.gradient(at, grad);
    return at.value;
  };

  DualSolve out;
  IterationCallback cb = [&](const LbfgsbIterate& it, std::span<const double> x) {
    const TransformedEval& at = evaluate(x);
    TraceRow row;
    row.iter = it.iter;
    row.g = it.f;
    row.pg_norm = it.pg_norm;
    row.primal_residual = primal_residual(inst, at);
    const double p = routed_primal_value(inst, at, cfg.feas_tol);
    row.gap = p == -kInf ? kInf : at.value - p;
    row.smooth = at.smooth;
    row.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!at.smooth) out.trace.nonsmooth = true;
    out.trace.rows.push_back(row);
  };

  {
    const Vec nu0 = layout.nu(v0);
    const std::vector<Vec> et0 = layout.with_eta() ? layout.eta_tilde(v0) : std::vector<Vec>{};
    const TransformedEval& at0 = evaluate(v0);
    if (!at0.finite()) {
      throw InfeasibleStartError(
          describe_infinite_start(inst, nu0, layout.with_eta() ? &et0 : nullptr));
    }
  }

  LbfgsbOptions lo;
  lo.grad_tol = cfg.grad_tol;
  lo.max_iter = cfg.max_iter;
  lo.memory = cfg.memory;
  lo.shrink = cfg.shrink;
  Lbfgsb driver(layout.lower(), layout.upper(), lo);
  out.run = driver.minimize(fun, std::move(v0), cb);
  out.at = evaluate(out.run.x);
  out.point.nu = layout.nu(out.run.x);
  const std::vector<Vec> et =
      layout.with_eta() ? layout.eta_tilde(out.run.x)
                        : std::vector<Vec>(inst.num_edges());
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    Vec eta = scatter_prices(out.point.nu, inst.edge(i).incidence);
    if (!et[i].empty()) {
      for (std::size_t k = 0; k < eta.size(); ++k) eta[k] += et[i][k];
    }
    out.point.eta.push_back(std::move(eta));
  }
  return out;
}

}  // namespace detail

// Full dual over (nu, eta~) with eta~ >= 0.
inline DualSolve solve_dual(const ProblemInstance& inst, const SolverConfig& cfg = {},
                            const std::optional<DualPoint>& start = std::nullopt) {
  DualLayout layout(inst, true);
  Vec v0;
  if (start) {
    const std::vector<Vec> et = eta_tilde_of(inst, *start);
    v0 = layout.pack(start->nu, &et);
  } else {
    v0 = layout.pack(inst.objective().default_start(), nullptr);
  }
  return detail::run_dual(inst, layout, std::move(v0), cfg);
}

// Reduced dual over nu alone; every edge utility must be zero.
inline DualSolve solve_zero_edge(const ProblemInstance& inst, const SolverConfig& cfg = {},
                                 const std::optional<Vec>& nu0 = std::nullopt) {
  if (!inst.zero_edge_utilities()) {
    throw ValidationError("reduced dual requires every edge utility to be zero");
  }
  DualLayout layout(inst, false);
  Vec v0 = layout.pack(nu0 ? *nu0 : inst.objective().default_start(), nullptr);
  return detail::run_dual(inst, layout, std::move(v0), cfg);
}

// For cut-structured objectives: try every threshold of the prices clipped
// to [0, 1] and keep the best 0/1 vector if it does not raise the dual.
inline std::optional<Vec> round_to_cut(const ProblemInstance& inst, const Vec& nu,
                                       double g_now, const SolverConfig& cfg = {}) {
  Vec c(nu.size());
  for (std::size_t j = 0; j < nu.size(); ++j) c[j] = std::clamp(nu[j], 0.0, 1.0);
  Vec thresholds;
  for (double v : c) {
    if (v > 0.0) thresholds.push_back(v);
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const auto fixed = inst.objective().fixed_coordinates();
  std::optional<Vec> best;
  double best_g = g_now;
  for (double theta : thresholds) {
    Vec cand(nu.size());
    for (std::size_t j = 0; j < nu.size(); ++j) cand[j] = c[j] >= theta ? 1.0 : 0.0;
    for (const FixedCoordinate& f : fixed) cand[f.index] = f.value;
    const double g =
        eval_transformed(inst, cand, nullptr, EvalOptions{cfg.use_shortcuts}, cfg.threads).value;
    if (g <= best_g) {
      best_g = g;
      best = std::move(cand);
    }
  }
  return best;
}

// Linear Fisher markets: the buyer edges cap each purchase at one unit, so
// the reduced dual is flat in a good's price between the two highest bids
// nu_i v_ij. Raising every price to the highest bid never increases g and
// selects the market-clearing prices, under which every purchase is
// marginal. Returns false when the instance is not a linear Fisher market.
inline bool select_market_prices(const ProblemInstance& inst, Vec& nu) {
  const auto* market = dynamic_cast<const FisherMarket*>(&inst.objective());
  if (!market) return false;
  const std::size_t nb = market->num_buyers();
  Vec bid(nu.size(), 0.0);
  for (const Edge& e : inst.edges()) {
    const auto* buyer = dynamic_cast<const FisherLinearEdge*>(e.oracle.get());
    if (!buyer) return false;
    const std::size_t ng = buyer->valuations().size();
    const std::size_t i = e.incidence[ng];
    if (i >= nb) return false;
    for (std::size_t l = 0; l < ng; ++l) {
      const std::size_t j = e.incidence[l];
      if (j < nb) return false;
      bid[j] = std::max(bid[j], nu[i] * buyer->valuations()[l]);
    }
  }
  for (std::size_t j = nb; j < nu.size(); ++j) nu[j] = bid[j];
  return true;
}

struct SolveResult {
  DualPoint dual;
  PrimalPoint primal;
  double dual_value = kInf;
  double primal_value = -kInf;
  double gap = kInf;
  double relative_gap = kInf;
  ConvergenceTrace trace;
  int iterations = 0;
  bool converged = false;
  bool solved = false;
  bool zero_edge_path = false;
  bool rounded = false;
  bool polished = false;
  bool recovery_used = false;
  bool recovered = true;
  double recovery_residual = 0.0;
  std::string status;
};

// Dual solve, optional cut rounding, primal recovery and gap.
inline SolveResult solve(const ProblemInstance& inst, const SolverConfig& cfg = {}) {
  SolveResult res;
  res.zero_edge_path = cfg.reduce_zero_edge && inst.zero_edge_utilities();
  DualSolve ds = res.zero_edge_path ? solve_zero_edge(inst, cfg) : solve_dual(inst, cfg);

  if (inst.zero_edge_utilities() && cfg.round_cuts &&
      inst.objective().integral_cut_structure()) {
    if (auto nu = round_to_cut(inst, ds.point.nu, ds.at.value, cfg)) {
      ds.at = eval_transformed(inst, *nu, nullptr, EvalOptions{cfg.use_shortcuts}, cfg.threads);
      ds.point.nu = *nu;
      for (std::size_t i = 0; i < inst.num_edges(); ++i) {
        ds.point.eta[i] = scatter_prices(ds.point.nu, inst.edge(i).incidence);
      }
      res.rounded = true;
    }
  }

  auto adopt = [&](Vec nu) {
    ds.at = eval_transformed(inst, nu, nullptr, EvalOptions{cfg.use_shortcuts}, cfg.threads);
    ds.point.nu = std::move(nu);
    for (std::size_t i = 0; i < inst.num_edges(); ++i) {
      ds.point.eta[i] = scatter_prices(ds.point.nu, inst.edge(i).incidence);
    }
  };
  auto select_prices = [&] {
    if (!inst.zero_edge_utilities()) return;
    Vec nu = ds.point.nu;
    if (select_market_prices(inst, nu)) adopt(std::move(nu));
  };
  select_prices();

  if (cfg.polish && !res.rounded && ds.trace.nonsmooth && inst.zero_edge_utilities()) {
    for (double tol : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
      const auto nu = polish_on_faces(inst, ds.point.nu, tol);
      if (!nu) continue;
      TransformedEval at =
          eval_transformed(inst, *nu, nullptr, EvalOptions{cfg.use_shortcuts}, cfg.threads);
      if (!(at.value <= ds.at.value + 1e-12 * (1.0 + std::abs(ds.at.value)))) continue;
      adopt(*nu);
      res.polished = true;
      select_prices();
      break;
    }
  }

  const std::vector<Face> faces = optimal_faces(inst, ds.point);
  const bool ambiguous = std::any_of(faces.begin(), faces.end(),
                                     [](const Face& f) { return !f.is_point(); });
  if (ambiguous) {
    const RecoveryTarget target = inst.objective().recovery_target(ds.point.nu, ds.at.net);
    RecoveryResult rr = restore_primal_best_effort(inst, target, faces);
    res.recovery_used = true;
    res.recovery_residual = rr.residual;
    res.recovered = rr.residual <= cfg.recovery_tol * (1.0 + norm_inf(target.target));
    res.primal.edge_flows = std::move(rr.flows);
  } else {
    for (const EdgeEval& e : ds.at.edges) res.primal.edge_flows.push_back(e.x);
  }
  res.primal.net_flow = assemble_net_flow(inst, res.primal.edge_flows);

  res.dual = std::move(ds.point);
  res.dual_value = ds.at.value;
  res.primal_value = primal_objective(inst, res.primal, cfg.feas_tol);
  res.gap = res.primal_value == -kInf ? kInf : res.dual_value - res.primal_value;
  res.relative_gap = relative_gap(res.gap, res.dual_value);
  res.trace = std::move(ds.trace);
  res.iterations = ds.run.iterations;
  res.converged = ds.run.converged;
  res.solved = res.converged || res.relative_gap <= cfg.gap_tol;
  res.status = res.solved ? "solved" : "not solved (" + ds.run.status + ")";
  return res;
}

}  // namespace convexflows
