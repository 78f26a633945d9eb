#pragma once

// Hypergraph problem model.
//
//   maximize    U(y) + sum_i V_i(x_i)
//   subject to  y = sum_i A_i x_i,  x_i in T_i
//
// A_i is never materialized: an EdgeIncidence lists the global node of each
// local coordinate, and A_i x / A_i^T nu are scatter / gather loops.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "convexflows/common.hpp"
#include "convexflows/oracle.hpp"

namespace convexflows {

class EdgeIncidence {
 public:
  EdgeIncidence() = default;
  explicit EdgeIncidence(std::vector<std::size_t> global_nodes)
      : nodes_(std::move(global_nodes)) {
    if (nodes_.size() < 2) {
      throw DimensionError("edge must be incident to at least two nodes");
    }
    std::unordered_set<std::size_t> seen;
    for (std::size_t j : nodes_) {
      if (!seen.insert(j).second) {
        throw DimensionError("edge lists global node " + std::to_string(j) +
                             " twice");
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t operator[](std::size_t k) const { return nodes_[k]; }
  const std::vector<std::size_t>& nodes() const { return nodes_; }

  void check_bounds(std::size_t n) const {
    for (std::size_t j : nodes_) {
      if (j >= n) {
        throw DimensionError("node index " + std::to_string(j) +
                             " out of range for n = " + std::to_string(n));
      }
    }
  }

 private:
  std::vector<std::size_t> nodes_;
};

struct Edge {
  EdgeIncidence incidence;
  std::shared_ptr<const EdgeOracle> oracle;
  // Null means V_i == 0.
  std::shared_ptr<const ConjugateOracle> utility;
};

class ProblemInstance {
 public:
  ProblemInstance(std::size_t n, std::vector<Edge> edges,
                  std::shared_ptr<const ConjugateOracle> objective)
      : n_(n), edges_(std::move(edges)), objective_(std::move(objective)) {
    if (edges_.empty()) throw DimensionError("instance needs at least one edge");
    if (!objective_) throw DimensionError("instance needs a net-flow objective");
    if (objective_->dimension() != n_) {
      throw DimensionError("objective dimension does not match node count");
    }
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      e.incidence.check_bounds(n_);
      if (!e.oracle) {
        throw DimensionError("edge " + std::to_string(i) + " has no oracle");
      }
      if (e.oracle->dimension() != e.incidence.size()) {
        throw DimensionError("edge " + std::to_string(i) +
                             ": oracle dimension does not match incidence");
      }
      if (e.utility && e.utility->dimension() != e.incidence.size()) {
        throw DimensionError("edge " + std::to_string(i) +
                             ": utility dimension does not match incidence");
      }
    }
  }

  std::size_t num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t i) const { return edges_[i]; }
  const ConjugateOracle& objective() const { return *objective_; }
  const std::shared_ptr<const ConjugateOracle>& objective_ptr() const {
    return objective_;
  }

  bool zero_edge_utilities() const {
    for (const Edge& e : edges_) {
      if (e.utility) return false;
    }
    return true;
  }

  // sum_i n_i
  std::size_t total_edge_dimension() const {
    std::size_t s = 0;
    for (const Edge& e : edges_) s += e.incidence.size();
    return s;
  }

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
  std::shared_ptr<const ConjugateOracle> objective_;
};

struct PrimalPoint {
  std::vector<Vec> edge_flows;
  Vec net_flow;
};

// y += A x
inline void scatter_add(std::span<const double> x, const EdgeIncidence& inc,
                        std::span<double> y) {
  if (x.size() != inc.size()) {
    throw DimensionError("flow length does not match incidence");
  }
  for (std::size_t k = 0; k < x.size(); ++k) y[inc[k]] += x[k];
}

inline Vec assemble_net_flow(const std::vector<Vec>& edge_flows,
                             const std::vector<EdgeIncidence>& incidences,
                             std::size_t n) {
  if (edge_flows.size() != incidences.size()) {
    throw DimensionError("number of flows does not match number of edges");
  }
  Vec y(n, 0.0);
  for (std::size_t i = 0; i < edge_flows.size(); ++i) {
    incidences[i].check_bounds(n);
    scatter_add(edge_flows[i], incidences[i], y);
  }
  return y;
}

inline Vec assemble_net_flow(const ProblemInstance& inst,
                             const std::vector<Vec>& edge_flows) {
  if (edge_flows.size() != inst.num_edges()) {
    throw DimensionError("number of flows does not match number of edges");
  }
  Vec y(inst.num_nodes(), 0.0);
  for (std::size_t i = 0; i < edge_flows.size(); ++i) {
    scatter_add(edge_flows[i], inst.edge(i).incidence, y);
  }
  return y;
}

// A_i^T nu
inline Vec scatter_prices(std::span<const double> nu, const EdgeIncidence& inc) {
  Vec out(inc.size());
  for (std::size_t k = 0; k < inc.size(); ++k) {
    if (inc[k] >= nu.size()) {
      throw DimensionError("incidence refers to node " + std::to_string(inc[k]) +
                           " beyond price vector of length " +
                           std::to_string(nu.size()));
    }
    out[k] = nu[inc[k]];
  }
  return out;
}

inline double primal_objective(const ProblemInstance& inst, const PrimalPoint& p,
                               double tol = 0.0) {
  if (p.net_flow.size() != inst.num_nodes() ||
      p.edge_flows.size() != inst.num_edges()) {
    throw DimensionError("primal point does not match instance");
  }
  double total = inst.objective().evaluate_primal(p.net_flow, tol);
  if (total == -kInf) return -kInf;
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    const Edge& e = inst.edge(i);
    if (p.edge_flows[i].size() != e.incidence.size()) {
      throw DimensionError("edge flow length does not match incidence");
    }
    if (!e.utility) continue;
    double v = e.utility->evaluate_primal(p.edge_flows[i], tol);
    if (v == -kInf) return -kInf;
    total += v;
  }
  return total;
}

struct FeasibilityReport {
  double net_flow_residual = 0.0;
  std::vector<bool> per_edge_membership;

  bool all_members() const {
    for (bool b : per_edge_membership) {
      if (!b) return false;
    }
    return true;
  }
};

inline FeasibilityReport check_feasibility(const ProblemInstance& inst,
                                           const PrimalPoint& p, double tol) {
  if (!(tol > 0.0)) throw DimensionError("feasibility tolerance must be positive");
  Vec y = assemble_net_flow(inst, p.edge_flows);
  if (p.net_flow.size() != y.size()) {
    throw DimensionError("net flow length does not match node count");
  }
  FeasibilityReport rep;
  for (std::size_t j = 0; j < y.size(); ++j) {
    rep.net_flow_residual =
        std::max(rep.net_flow_residual, std::abs(p.net_flow[j] - y[j]));
  }
  rep.per_edge_membership.reserve(inst.num_edges());
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    rep.per_edge_membership.push_back(
        inst.edge(i).oracle->is_member(p.edge_flows[i], tol));
  }
  return rep;
}

}  // namespace convexflows
