#pragma once

// Independent oracles for certifying solver output. They read instances
// through core types and OracleSpec parameters only, and recompute gains,
// trading invariants and utilities from scratch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "convexflows/core.hpp"
#include "convexflows/dual.hpp"

namespace cfval {

using convexflows::ProblemInstance;
using convexflows::Vec;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- max flow

struct Arc {
  std::size_t from;
  std::size_t to;
  double cap;
};

struct MaxFlowResult {
  double value = 0.0;
  std::vector<bool> source_side;  // reachable in the final residual graph
};

// Edmonds-Karp on an adjacency matrix; parallel arcs are merged.
inline MaxFlowResult maxflow_oracle(std::size_t n, const std::vector<Arc>& arcs,
                                    std::size_t s, std::size_t t) {
  std::vector<std::vector<double>> r(n, std::vector<double>(n, 0.0));
  for (const Arc& a : arcs) r[a.from][a.to] += a.cap;
  MaxFlowResult out;
  for (;;) {
    std::vector<long> parent(n, -1);
    parent[s] = static_cast<long>(s);
    std::queue<std::size_t> q;
    q.push(s);
    while (!q.empty() && parent[t] < 0) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v = 0; v < n; ++v) {
        if (parent[v] < 0 && r[u][v] > 0.0) {
          parent[v] = static_cast<long>(u);
          q.push(v);
        }
      }
    }
    if (parent[t] < 0) {
      out.source_side.assign(n, false);
      for (std::size_t v = 0; v < n; ++v) out.source_side[v] = parent[v] >= 0;
      return out;
    }
    double b = kInf;
    for (std::size_t v = t; v != s; v = static_cast<std::size_t>(parent[v])) {
      b = std::min(b, r[static_cast<std::size_t>(parent[v])][v]);
    }
    for (std::size_t v = t; v != s; v = static_cast<std::size_t>(parent[v])) {
      const auto u = static_cast<std::size_t>(parent[v]);
      r[u][v] -= b;
      r[v][u] += b;
    }
    out.value += b;
  }
}

inline std::vector<Arc> arcs_of(const ProblemInstance& inst) {
  std::vector<Arc> arcs;
  for (const auto& e : inst.edges()) {
    const auto spec = e.oracle->spec();
    if (spec.kind != "lossless") throw std::invalid_argument("max-flow oracle needs lossless edges");
    arcs.push_back({e.incidence[0], e.incidence[1], spec.scalars.at("capacity")});
  }
  return arcs;
}

inline double maxflow_oracle(const ProblemInstance& inst) {
  return maxflow_oracle(inst.num_nodes(), arcs_of(inst), 0, inst.num_nodes() - 1).value;
}

// Capacity of the cut {j : nu_j < 1/2} -> {j : nu_j >= 1/2}.
inline double cut_capacity(const ProblemInstance& inst, const Vec& nu) {
  double c = 0.0;
  for (const Arc& a : arcs_of(inst)) {
    if (nu[a.from] < 0.5 && nu[a.to] >= 0.5) c += a.cap;
  }
  return c;
}

// ----------------------------------------------------- primal evaluation

// Largest last coordinate of edge i given the others, or -inf if the others
// are infeasible. Also reports the grid box for the free coordinates.
struct EdgeModel {
  std::size_t dim = 0;
  Vec lo, hi;  // box for coordinates 0..dim-2
  std::function<double(std::span<const double>)> last;
};

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline EdgeModel gain_model(double w_lo, double w_hi, std::function<double(double)> h) {
  EdgeModel m;
  m.dim = 2;
  m.lo = {-w_hi};
  m.hi = {-w_lo};
  m.last = [=](std::span<const double> x) {
    const double w = -x[0];
    if (w < w_lo - 1e-12 || w > w_hi + 1e-12) return -kInf;
    return h(std::clamp(w, w_lo, w_hi));
  };
  return m;
}

// tender_cap bounds how much of each asset may be tendered, as a multiple
// of its reserve; CFMMs accept unbounded tenders.
inline EdgeModel edge_model(const convexflows::Edge& e, double tender_cap) {
  const auto spec = e.oracle->spec();
  const std::string& k = spec.kind;
  if (k == "lossless") {
    const double b = spec.scalars.at("capacity");
    return gain_model(0.0, b, [](double w) { return w; });
  }
  if (k == "linear_gain") {
    const double g = spec.scalars.at("gain"), b = spec.scalars.at("capacity");
    return gain_model(0.0, b, [g](double w) { return g * w; });
  }
  if (k == "piecewise_linear") {
    const Vec w = spec.vectors.at("w"), h = spec.vectors.at("h");
    return gain_model(w.front(), w.back(), [w, h](double x) {
      std::size_t s = 0;
      while (s + 2 < w.size() && x > w[s + 1]) ++s;
      return h[s] + (h[s + 1] - h[s]) * (x - w[s]) / (w[s + 1] - w[s]);
    });
  }
  if (k == "opf_line") {
    const double a = spec.scalars.at("alpha"), b = spec.scalars.at("beta");
    const double cap = spec.scalars.at("capacity");
    return gain_model(0.0, cap, [a, b](double w) {
      const double loss = a * (softplus(b * w) - std::log(2.0)) - 2.0 * w;
      return w - loss;
    });
  }
  if (k == "cfmm_geomean") {
    const Vec R = spec.vectors.at("reserves");
    const std::size_t n = R.size();
    const Vec w = spec.vectors.count("weights") ? spec.vectors.at("weights")
                                                : Vec(n, 1.0 / static_cast<double>(n));
    const double gamma = spec.scalars.count("fee") ? spec.scalars.at("fee") : 1.0;
    EdgeModel m;
    m.dim = n;
    for (std::size_t j = 0; j + 1 < n; ++j) {
      m.lo.push_back(-tender_cap * R[j]);
      m.hi.push_back(R[j]);
    }
    m.last = [R, w, gamma, n](std::span<const double> x) {
      // Weighted log of post-trade reserves must not fall.
      double S = 0.0;
      for (std::size_t j = 0; j + 1 < n; ++j) {
        const double post = x[j] >= 0.0 ? R[j] - x[j] : R[j] - gamma * x[j];
        if (!(post > 0.0)) return -kInf;
        S += w[j] * (std::log(post) - std::log(R[j]));
      }
      const double Q = R[n - 1] * std::exp(-S / w[n - 1]);
      return Q <= R[n - 1] ? R[n - 1] - Q : -(Q - R[n - 1]) / gamma;
    };
    return m;
  }
  throw std::invalid_argument("brute force does not support edge kind " + k);
}

// Objective and edge utilities recomputed from their parameters. Strict
// feasibility, so the result is a valid lower bound on p*.
inline double utility(const convexflows::OracleSpec& spec, const Vec& y) {
  const std::string& k = spec.kind;
  if (k == "linear_nonneg") {
    const Vec& c = spec.vectors.at("c");
    double v = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] < 0.0) return -kInf;
      v += c[j] * y[j];
    }
    return v;
  }
  if (k == "opf_quadratic") {
    const Vec& d = spec.vectors.at("d");
    double v = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double s = std::max(0.0, d[j] - y[j]);
      v -= 0.5 * s * s;
    }
    return v;
  }
  if (k == "maxflow") {
    const std::size_t n = y.size();
    for (std::size_t j = 1; j + 1 < n; ++j) {
      if (y[j] < 0.0) return -kInf;
    }
    if (y[0] + y[n - 1] < 0.0) return -kInf;
    return y[n - 1];
  }
  if (k == "mincost") {
    const std::size_t n = y.size();
    for (std::size_t j = 1; j + 1 < n; ++j) {
      if (y[j] < 0.0) return -kInf;
    }
    if (y[0] + y[n - 1] < 0.0 || y[n - 1] < spec.scalars.at("v")) return -kInf;
    return 0.0;
  }
  if (k == "quadratic_penalty") {
    double v = 0.0;
    for (double x : y) {
      if (x < 0.0) v -= 0.5 * x * x;
    }
    return v;
  }
  throw std::invalid_argument("brute force does not support utility kind " + k);
}

struct BruteForceResult {
  double value = -kInf;
  std::vector<Vec> flows;
};

// Grid search over the first n_i - 1 coordinates of every edge (the last
// coordinate is taken as large as the edge allows, which is optimal for
// nondecreasing objectives). Each refinement level re-grids a box of two
// cells around the incumbent.
inline BruteForceResult brute_force_primal(const ProblemInstance& inst, std::size_t resolution,
                                           int levels = 1, double tender_cap = 2.0) {
  if (inst.total_edge_dimension() > 6) {
    throw std::invalid_argument("brute force is limited to total edge dimension 6");
  }
  std::vector<EdgeModel> models;
  std::vector<std::size_t> owner, local;
  Vec lo, hi;
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    models.push_back(edge_model(inst.edge(i), tender_cap));
    for (std::size_t k = 0; k + 1 < models.back().dim; ++k) {
      owner.push_back(i);
      local.push_back(k);
      lo.push_back(models.back().lo[k]);
      hi.push_back(models.back().hi[k]);
      if (!std::isfinite(lo.back()) || !std::isfinite(hi.back())) {
        throw std::invalid_argument("brute force refuses unbounded edges");
      }
    }
  }
  const std::size_t D = lo.size();
  const auto obj = inst.objective().spec();

  BruteForceResult best;
  auto evaluate = [&](const Vec& z) {
    std::vector<Vec> flows(inst.num_edges());
    for (std::size_t i = 0; i < inst.num_edges(); ++i) flows[i].assign(models[i].dim, 0.0);
    for (std::size_t d = 0; d < D; ++d) flows[owner[d]][local[d]] = z[d];
    double v = 0.0;
    for (std::size_t i = 0; i < inst.num_edges(); ++i) {
      const double last = models[i].last(flows[i]);
      if (last == -kInf) return;
      flows[i].back() = last;
      if (inst.edge(i).utility) v += utility(inst.edge(i).utility->spec(), flows[i]);
    }
    Vec y(inst.num_nodes(), 0.0);
    for (std::size_t i = 0; i < inst.num_edges(); ++i) {
      for (std::size_t k = 0; k < flows[i].size(); ++k) y[inst.edge(i).incidence[k]] += flows[i][k];
    }
    v += utility(obj, y);
    if (v > best.value) {
      best.value = v;
      best.flows = std::move(flows);
    }
  };

  Vec z(D);
  std::vector<std::size_t> idx(D, 0);
  for (int level = 0; level < levels; ++level) {
    if (level > 0 && best.value > -kInf) {
      Vec centre(D);
      for (std::size_t d = 0; d < D; ++d) centre[d] = best.flows[owner[d]][local[d]];
      for (std::size_t d = 0; d < D; ++d) {
        const double h = 2.0 * (hi[d] - lo[d]) / static_cast<double>(resolution - 1);
        lo[d] = std::max(lo[d], centre[d] - h);
        hi[d] = std::min(hi[d], centre[d] + h);
      }
    }
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      for (std::size_t d = 0; d < D; ++d) {
        z[d] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(idx[d]) /
                           static_cast<double>(resolution - 1);
      }
      evaluate(z);
      std::size_t d = 0;
      while (d < D && ++idx[d] == resolution) idx[d++] = 0;
      if (d == D) break;
    }
  }
  return best;
}

// --------------------------------------------------------- gradient check

struct GradientReport {
  bool pass = true;
  bool skipped = false;  // nonsmooth point: maximizers not unique
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences of the transformed dual G(nu, eta~) against its
// analytic gradient. Coordinates pinned by the objective or by a missing
// edge utility are not perturbed; zero-edge instances check nu only.
inline GradientReport fd_gradient_check(const ProblemInstance& inst,
                                        const convexflows::DualPoint& mu, double step,
                                        double tol) {
  using convexflows::eval_transformed;
  GradientReport rep;
  const Vec nu = mu.nu;
  std::vector<Vec> et = convexflows::eta_tilde_of(inst, mu);
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    if (!inst.edge(i).utility) std::fill(et[i].begin(), et[i].end(), 0.0);
  }
  const auto at = eval_transformed(inst, nu, &et);
  if (!at.finite()) throw std::invalid_argument("gradient check needs a point inside the domain");
  if (!at.smooth) {
    rep.skipped = true;
    return rep;
  }
  std::vector<bool> pinned(inst.num_nodes(), false);
  for (const auto& f : inst.objective().fixed_coordinates()) pinned[f.index] = true;

  auto record = [&](double fd, double an) {
    const double err = std::abs(fd - an) / std::max(1.0, std::abs(an));
    rep.max_rel_error = std::max(rep.max_rel_error, err);
    ++rep.checked;
  };
  for (std::size_t j = 0; j < inst.num_nodes(); ++j) {
    if (pinned[j]) continue;
    Vec p = nu, m = nu;
    p[j] += step;
    m[j] -= step;
    const double fp = eval_transformed(inst, p, &et).value;
    const double fm = eval_transformed(inst, m, &et).value;
    if (!std::isfinite(fp) || !std::isfinite(fm)) continue;
    record((fp - fm) / (2.0 * step), at.grad_nu[j]);
  }
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    if (!inst.edge(i).utility) continue;
    for (std::size_t k = 0; k < et[i].size(); ++k) {
      auto p = et, m = et;
      p[i][k] += step;
      m[i][k] -= step;
      const double fp = eval_transformed(inst, nu, &p).value;
      const double fm = eval_transformed(inst, nu, &m).value;
      if (!std::isfinite(fp) || !std::isfinite(fm)) continue;
      record((fp - fm) / (2.0 * step), at.grad_eta[i][k]);
    }
  }
  rep.pass = rep.max_rel_error <= tol;
  return rep;
}

// ------------------------------------------------------------ Fisher KKT

struct FisherKktReport {
  bool pass = true;
  double max_supply_violation = 0.0;  // |sum_i x_ij - 1|
  double max_budget_violation = 0.0;  // |mu^T x_i - b_i|
  double max_bang_violation = 0.0;    // v_ij <= (u_i / b_i) mu_j, tight when bought
  std::vector<std::string> violations;
};

// x[i][j] allocation of good j to buyer i, mu[j] price of good j.
inline FisherKktReport fisher_kkt_check(const std::vector<Vec>& x, const Vec& mu, const Vec& b,
                                        const std::vector<Vec>& v, double tol) {
  FisherKktReport rep;
  const std::size_t nb = b.size(), ng = mu.size();
  auto flag = [&](std::string what) {
    rep.pass = false;
    rep.violations.push_back(std::move(what));
  };
  for (std::size_t j = 0; j < ng; ++j) {
    double sold = 0.0;
    for (std::size_t i = 0; i < nb; ++i) sold += x[i][j];
    rep.max_supply_violation = std::max(rep.max_supply_violation, std::abs(sold - 1.0));
    if (std::abs(sold - 1.0) > tol) flag("good " + std::to_string(j) + " not fully sold");
  }
  for (std::size_t i = 0; i < nb; ++i) {
    double spent = 0.0, u = 0.0;
    for (std::size_t j = 0; j < ng; ++j) {
      spent += mu[j] * x[i][j];
      u += v[i][j] * x[i][j];
    }
    const double e = std::abs(spent - b[i]);
    rep.max_budget_violation = std::max(rep.max_budget_violation, e);
    if (e > tol * (1.0 + b[i])) flag("buyer " + std::to_string(i) + " budget not exhausted");
    if (b[i] <= 0.0) continue;
    for (std::size_t j = 0; j < ng; ++j) {
      const double rhs = u / b[i] * mu[j];
      double viol = std::max(0.0, v[i][j] - rhs);
      if (x[i][j] > tol) viol = std::max(viol, std::abs(v[i][j] - rhs));
      rep.max_bang_violation = std::max(rep.max_bang_violation, viol);
      if (viol > tol * (1.0 + v[i][j])) {
        flag("buyer " + std::to_string(i) + " good " + std::to_string(j) +
             " violates the bang-per-buck condition");
      }
    }
  }
  return rep;
}

// Allocation, prices, budgets and valuations read back from a solved Fisher
// instance: buyer edges carry goods in node order, then the buyer node.
struct FisherMarketView {
  std::vector<Vec> x, v;
  Vec mu, b;
};

inline FisherMarketView fisher_view(const ProblemInstance& inst, const std::vector<Vec>& flows,
                                    const Vec& nu) {
  FisherMarketView out;
  const auto spec = inst.objective().spec();
  out.b = spec.vectors.at("budgets");
  const std::size_t nb = out.b.size(), ng = inst.num_nodes() - nb;
  out.mu.assign(nu.begin() + static_cast<long>(nb), nu.end());
  out.x.assign(nb, Vec(ng, 0.0));
  out.v.assign(nb, Vec(ng, 0.0));
  for (std::size_t e = 0; e < inst.num_edges(); ++e) {
    const auto& nodes = inst.edge(e).incidence.nodes();
    const Vec val = inst.edge(e).oracle->spec().vectors.at("valuations");
    const std::size_t i = nodes.back();
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
      out.x[i][nodes[k] - nb] = -flows[e][k];
      out.v[i][nodes[k] - nb] = val[k];
    }
  }
  return out;
}

}  // namespace cfval
