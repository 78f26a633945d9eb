#pragma once

// Dual function and its transformed form.
//
//   g(nu, eta) = Ubar(nu) + sum_i [ Vbar_i(eta_i - A_i^T nu) + f_i(eta_i) ]
//
// With eta~_i = eta_i - A_i^T nu the constraints nu >= 0, eta_i >= A_i^T nu
// become plain bounds, and
//
//   G(nu, eta~) = Ubar(nu) + sum_i [ Vbar_i(eta~_i) + f_i(eta~_i + A_i^T nu) ]
//   dG/dnu      = sum_i A_i xt_i - y*
//   dG/deta~_i  = xt_i - x_i*
//
// where y*, x_i* maximize the conjugate subproblems and xt_i the arbitrage
// subproblem. An edge without a utility has Vbar_i = indicator{0}, which
// pins eta~_i = 0.

#include <cmath>
#include <span>
#include <vector>

#include "convexflows/common.hpp"
#include "convexflows/core.hpp"
#include "convexflows/oracle.hpp"
#include "convexflows/parallel.hpp"

namespace convexflows {

struct DualPoint {
  Vec nu;
  std::vector<Vec> eta;
};

struct TransformedEval {
  double value = kInf;
  Vec grad_nu;
  std::vector<Vec> grad_eta;
  ConjEval net;
  std::vector<EdgeEval> edges;
  std::vector<ConjEval> utilities;
  Vec routed;  // sum_i A_i xt_i
  bool smooth = true;

  bool finite() const { return std::isfinite(value); }
};

// eta_tilde may be null, meaning zero on every edge.
inline TransformedEval eval_transformed(const ProblemInstance& inst,
                                        std::span<const double> nu,
                                        const std::vector<Vec>* eta_tilde,
                                        const EvalOptions& opts = {},
                                        std::size_t workers = 1) {
  const std::size_t n = inst.num_nodes();
  const std::size_t m = inst.num_edges();
  if (nu.size() != n) throw DimensionError("price vector has wrong length");
  if (eta_tilde && eta_tilde->size() != m) {
    throw DimensionError("one edge price vector per edge expected");
  }
  TransformedEval out;
  out.net = inst.objective().conj(nu);
  if (!std::isfinite(out.net.value)) return out;

  out.edges.resize(m);
  out.utilities.resize(m);
  std::vector<double> util_value(m, 0.0);
  std::vector<char> bad(m, 0);
  parallel_for(m, workers, [&](std::size_t i) {
    const Edge& e = inst.edge(i);
    Vec eta = scatter_prices(nu, e.incidence);
    if (eta_tilde) {
      const Vec& et = (*eta_tilde)[i];
      if (et.size() != eta.size()) throw DimensionError("edge price vector has wrong length");
      if (e.utility) {
        out.utilities[i] = e.utility->conj(et);
        util_value[i] = out.utilities[i].value;
      } else if (norm_inf(et) != 0.0) {
        bad[i] = 1;
        return;
      }
      for (std::size_t k = 0; k < eta.size(); ++k) eta[k] += et[k];
    } else if (e.utility) {
      out.utilities[i] = e.utility->conj(Vec(eta.size(), 0.0));
      util_value[i] = out.utilities[i].value;
    }
    out.edges[i] = e.oracle->evaluate(eta, opts);
    if (!std::isfinite(util_value[i]) || !std::isfinite(out.edges[i].value) ||
        !out.edges[i].attained) {
      bad[i] = 1;
    }
  });

  // Fixed-order reduction keeps results independent of the worker count.
  double value = out.net.value;
  for (std::size_t i = 0; i < m; ++i) {
    if (bad[i]) return TransformedEval{kInf, {}, {}, out.net, {}, {}, {}, false};
    value += util_value[i] + out.edges[i].value;
  }
  out.value = value;
  out.routed.assign(n, 0.0);
  out.grad_eta.resize(m);
  out.smooth = out.net.unique;
  for (std::size_t i = 0; i < m; ++i) {
    const Edge& e = inst.edge(i);
    scatter_add(out.edges[i].x, e.incidence, out.routed);
    Vec ge = out.edges[i].x;
    if (e.utility) {
      for (std::size_t k = 0; k < ge.size(); ++k) ge[k] -= out.utilities[i].maximizer[k];
      if (!out.utilities[i].unique) out.smooth = false;
    }
    if (!out.edges[i].unique) out.smooth = false;
    out.grad_eta[i] = std::move(ge);
  }
  out.grad_nu = out.routed;
  for (std::size_t j = 0; j < n; ++j) out.grad_nu[j] -= out.net.maximizer[j];
  return out;
}

inline Vec transform(const ProblemInstance& inst, const DualPoint& mu) {
  if (mu.nu.size() != inst.num_nodes() || mu.eta.size() != inst.num_edges()) {
    throw DimensionError("dual point does not match instance");
  }
  Vec out(mu.nu);
  out.reserve(inst.num_nodes() + inst.total_edge_dimension());
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    const EdgeIncidence& inc = inst.edge(i).incidence;
    if (mu.eta[i].size() != inc.size()) throw DimensionError("edge price length mismatch");
    for (std::size_t k = 0; k < inc.size(); ++k) out.push_back(mu.eta[i][k] - mu.nu[inc[k]]);
  }
  return out;
}

inline DualPoint untransform(const ProblemInstance& inst, std::span<const double> mu_t) {
  const std::size_t n = inst.num_nodes();
  if (mu_t.size() != n + inst.total_edge_dimension()) {
    throw DimensionError("transformed dual point has wrong length");
  }
  DualPoint mu{Vec(mu_t.begin(), mu_t.begin() + n), {}};
  std::size_t off = n;
  for (const Edge& e : inst.edges()) {
    Vec eta(e.incidence.size());
    for (std::size_t k = 0; k < eta.size(); ++k) eta[k] = mu_t[off + k] + mu.nu[e.incidence[k]];
    off += eta.size();
    mu.eta.push_back(std::move(eta));
  }
  return mu;
}

inline std::vector<Vec> eta_tilde_of(const ProblemInstance& inst, const DualPoint& mu) {
  std::vector<Vec> out;
  out.reserve(inst.num_edges());
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    const EdgeIncidence& inc = inst.edge(i).incidence;
    Vec et(inc.size());
    for (std::size_t k = 0; k < inc.size(); ++k) et[k] = mu.eta[i][k] - mu.nu[inc[k]];
    out.push_back(std::move(et));
  }
  return out;
}

struct DualEval {
  double value = kInf;
  DualPoint grad;
  TransformedEval sub;
};

// Value and gradient in the original coordinates, with x_i the edge flow
// and z_i the utility's maximizer (zero without a utility):
//   d g / d nu    = dG/dnu - sum_i A_i dG/deta~_i = sum_i A_i z_i - y*
//   d g / d eta_i = dG/deta~_i                     = x_i - z_i
inline DualEval eval_dual(const ProblemInstance& inst, const DualPoint& mu,
                          const EvalOptions& opts = {}, std::size_t workers = 1) {
  if (mu.nu.size() != inst.num_nodes() || mu.eta.size() != inst.num_edges()) {
    throw DimensionError("dual point does not match instance");
  }
  std::vector<Vec> et = eta_tilde_of(inst, mu);
  // Edges without a utility tolerate rounding noise in eta_i - A_i^T nu.
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    if (inst.edge(i).utility) continue;
    const double scale = 1e-12 * (1.0 + norm_inf(mu.eta[i]));
    for (double& v : et[i]) {
      if (std::abs(v) <= scale) v = 0.0;
    }
  }
  DualEval out;
  out.sub = eval_transformed(inst, mu.nu, &et, opts, workers);
  out.value = out.sub.value;
  if (!out.sub.finite()) return out;
  out.grad.nu = out.sub.grad_nu;
  out.grad.eta = out.sub.grad_eta;
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    const EdgeIncidence& inc = inst.edge(i).incidence;
    for (std::size_t k = 0; k < inc.size(); ++k) out.grad.nu[inc[k]] -= out.grad.eta[i][k];
  }
  return out;
}

}  // namespace convexflows
