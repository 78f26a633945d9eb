#pragma once

// Instance and result files (JSON syntax).
//
//   {
//     "version": "convexflows-instance/1",
//     "n": 3,
//     "objective": {"kind": "maxflow", "params": {}},
//     "edges": [
//       {"kind": "lossless", "params": {"capacity": 1}, "nodes": [0, 1]},
//       {"kind": "cfmm_geomean", "params": {...}, "nodes": [1, 2],
//        "edge_utility": {"kind": "quadratic_penalty", "params": {}}}
//     ]
//   }
//
// Only the closed set of bundled kinds is accepted. Infinite reals in result
// files are written as null.

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "convexflows/cfmm_edge.hpp"
#include "convexflows/common.hpp"
#include "convexflows/core.hpp"
#include "convexflows/fisher_edge.hpp"
#include "convexflows/objectives.hpp"
#include "convexflows/solver.hpp"
#include "convexflows/two_node_edge.hpp"

namespace convexflows {

using Json = nlohmann::ordered_json;

inline constexpr const char* kInstanceVersion = "convexflows-instance/1";
inline constexpr const char* kResultVersion = "convexflows-result/1";

namespace io_detail {

class Params {
 public:
  Params(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError(path_ + ": expected an object");
  }

  double number(const std::string& key) const {
    const Json& v = field(key);
    if (!v.is_number()) throw ParseError(path_ + "." + key + ": expected a number");
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) const {
    return j_.contains(key) ? number(key) : fallback;
  }

  Vec vector(const std::string& key) const {
    const Json& v = field(key);
    if (!v.is_array()) throw ParseError(path_ + "." + key + ": expected an array");
    Vec out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) {
        throw ParseError(path_ + "." + key + "[" + std::to_string(k) + "]: expected a number");
      }
      out.push_back(v[k].get<double>());
    }
    return out;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::size_t count(const std::string& key) const {
    const double v = number(key);
    if (!(v >= 0.0) || v != std::floor(v)) {
      throw ParseError(path_ + "." + key + ": expected a nonnegative integer");
    }
    return static_cast<std::size_t>(v);
  }

 private:
  const Json& field(const std::string& key) const {
    auto it = j_.find(key);
    if (it == j_.end()) throw ParseError(path_ + "." + key + ": missing");
    return *it;
  }

  const Json& j_;
  std::string path_;
};

inline const Json& member(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "." + key + ": missing");
  return *it;
}

inline std::string kind_of(const Json& j, const std::string& path) {
  const Json& k = member(j, "kind", path);
  if (!k.is_string()) throw ParseError(path + ".kind: expected a string");
  return k.get<std::string>();
}

inline const Json& params_of(const Json& j) {
  static const Json empty = Json::object();
  auto it = j.find("params");
  return it == j.end() ? empty : *it;
}

template <class F>
auto guarded(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline std::shared_ptr<const EdgeOracle> make_edge(const Json& j, const std::string& path) {
  const std::string kind = kind_of(j, path);
  const Params p(params_of(j), path + ".params");
  return guarded(path, [&]() -> std::shared_ptr<const EdgeOracle> {
    if (kind == "lossless") return lossless_edge(p.number("capacity"));
    if (kind == "linear_gain") return linear_gain_edge(p.number("gain"), p.number("capacity"));
    if (kind == "piecewise_linear") return piecewise_linear_edge(p.vector("w"), p.vector("h"));
    if (kind == "opf_line") {
      return opf_line_edge(p.number("alpha"), p.number("beta"), p.number("capacity"));
    }
    if (kind == "cfmm_geomean") {
      Vec R = p.vector("reserves");
      const double fee = p.number_or("fee", 1.0);
      if (!p.has("weights")) return GeometricMeanPool::uniform(std::move(R), fee);
      return std::make_shared<GeometricMeanPool>(std::move(R), p.vector("weights"), fee);
    }
    if (kind == "fisher_linear") return std::make_shared<FisherLinearEdge>(p.vector("valuations"));
    throw ParseError(path + ".kind: unknown edge kind '" + kind + "'");
  });
}

inline std::shared_ptr<const ConjugateOracle> make_objective(const Json& j, std::size_t n,
                                                             const std::string& path) {
  const std::string kind = kind_of(j, path);
  const Params p(params_of(j), path + ".params");
  auto sized = [&](Vec v, const char* name) {
    if (v.size() != n) {
      throw ValidationError(path + ".params." + name + ": length " + std::to_string(v.size()) +
                            " does not match n = " + std::to_string(n));
    }
    return v;
  };
  return guarded(path, [&]() -> std::shared_ptr<const ConjugateOracle> {
    if (kind == "linear_nonneg") return std::make_shared<LinearNonneg>(sized(p.vector("c"), "c"));
    if (kind == "opf_quadratic") return std::make_shared<OpfQuadratic>(sized(p.vector("d"), "d"));
    if (kind == "maxflow") return std::make_shared<MaxFlow>(n);
    if (kind == "mincost") return std::make_shared<MinCost>(n, p.number("v"));
    if (kind == "fisher") {
      return std::make_shared<FisherMarket>(p.vector("budgets"), p.count("n_goods"));
    }
    throw ParseError(path + ".kind: unknown objective kind '" + kind + "'");
  });
}

inline std::shared_ptr<const ConjugateOracle> make_utility(const Json& j, std::size_t dim,
                                                           const std::string& path) {
  const std::string kind = kind_of(j, path);
  if (kind == "quadratic_penalty") return std::make_shared<QuadraticPenalty>(dim);
  throw ParseError(path + ".kind: unknown edge utility kind '" + kind + "'");
}

// Integral values are written as integers so hand-written files round-trip.
inline Json number_json(double v) {
  if (!std::isfinite(v)) return Json(nullptr);
  if (v == std::floor(v) && std::abs(v) < 9e15) return Json(static_cast<long long>(v));
  return Json(v);
}

inline Json vector_json(const Vec& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_json(x));
  return a;
}

inline Json spec_json(const OracleSpec& s) {
  if (s.kind == "callable") throw ParseError("user-defined oracles cannot be serialized");
  Json params = Json::object();
  // Merge scalars and vectors in key order.
  std::map<std::string, Json> all;
  for (const auto& [k, v] : s.scalars) all[k] = number_json(v);
  for (const auto& [k, v] : s.vectors) all[k] = vector_json(v);
  for (auto& [k, v] : all) params[k] = std::move(v);
  Json out = Json::object();
  out["kind"] = s.kind;
  out["params"] = std::move(params);
  return out;
}

inline double real_or_inf(const Json& j) {
  if (j.is_null()) return kInf;
  if (!j.is_number()) throw ParseError("expected a number or null");
  return j.get<double>();
}

inline Vec vec_from(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array");
  Vec v;
  for (const Json& x : j) {
    if (!x.is_number()) throw ParseError(path + ": expected numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline std::vector<Vec> vecs_from(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array");
  std::vector<Vec> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    out.push_back(vec_from(j[k], path + "[" + std::to_string(k) + "]"));
  }
  return out;
}

}  // namespace io_detail

inline ProblemInstance instance_from_json(const Json& doc) {
  using namespace io_detail;
  if (!doc.is_object()) throw ParseError("$: expected an object");
  const Json& ver = member(doc, "version", "$");
  if (!ver.is_string() || ver.get<std::string>() != kInstanceVersion) {
    throw ParseError(std::string("$.version: expected \"") + kInstanceVersion + "\"");
  }
  const Json& nj = member(doc, "n", "$");
  if (!nj.is_number_integer() || nj.get<long long>() < 1) {
    throw ParseError("$.n: expected a positive integer");
  }
  const std::size_t n = nj.get<std::size_t>();
  auto objective = make_objective(member(doc, "objective", "$"), n, "$.objective");
  const Json& ej = member(doc, "edges", "$");
  if (!ej.is_array()) throw ParseError("$.edges: expected an array");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < ej.size(); ++i) {
    const std::string path = "$.edges[" + std::to_string(i) + "]";
    const Json& e = ej[i];
    const Json& nodes = member(e, "nodes", path);
    if (!nodes.is_array()) throw ParseError(path + ".nodes: expected an array");
    std::vector<std::size_t> idx;
    for (const Json& x : nodes) {
      if (!x.is_number_integer() || x.get<long long>() < 0) {
        throw ParseError(path + ".nodes: expected nonnegative integers");
      }
      idx.push_back(x.get<std::size_t>());
    }
    Edge edge;
    edge.incidence = guarded(path + ".nodes", [&] { return EdgeIncidence(idx); });
    guarded(path + ".nodes", [&] {
      edge.incidence.check_bounds(n);
      return 0;
    });
    edge.oracle = make_edge(e, path);
    if (e.contains("edge_utility") && !e["edge_utility"].is_null()) {
      edge.utility = make_utility(e["edge_utility"], idx.size(), path + ".edge_utility");
    }
    edges.push_back(std::move(edge));
  }
  return guarded("$", [&] { return ProblemInstance(n, std::move(edges), objective); });
}

inline ProblemInstance parse_instance(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return instance_from_json(doc);
}

inline Json instance_to_json(const ProblemInstance& inst) {
  using namespace io_detail;
  Json doc = Json::object();
  doc["version"] = kInstanceVersion;
  doc["n"] = inst.num_nodes();
  doc["objective"] = spec_json(inst.objective().spec());
  Json edges = Json::array();
  for (const Edge& e : inst.edges()) {
    Json j = spec_json(e.oracle->spec());
    Json nodes = Json::array();
    for (std::size_t v : e.incidence.nodes()) nodes.push_back(v);
    j["nodes"] = std::move(nodes);
    if (e.utility) j["edge_utility"] = spec_json(e.utility->spec());
    edges.push_back(std::move(j));
  }
  doc["edges"] = std::move(edges);
  return doc;
}

inline std::string serialize_instance(const ProblemInstance& inst, int indent = 2) {
  return instance_to_json(inst).dump(indent);
}

struct ResultFile {
  std::string status;
  bool solved = false;
  double objective = -kInf;
  double dual_value = kInf;
  double gap = kInf;
  double relative_gap = kInf;
  int iterations = 0;
  Vec nu;
  std::vector<Vec> eta;
  std::vector<Vec> flows;
  Vec y;
};

inline ResultFile result_file(const SolveResult& r) {
  return ResultFile{r.status,        r.solved,         r.primal_value,       r.dual_value,
                    r.gap,           r.relative_gap,   r.iterations,         r.dual.nu,
                    r.dual.eta,      r.primal.edge_flows, r.primal.net_flow};
}

inline std::string serialize_result(const ResultFile& r, int indent = 2) {
  Json doc = Json::object();
  doc["version"] = kResultVersion;
  doc["status"] = r.status;
  doc["solved"] = r.solved;
  doc["objective"] = r.objective == -kInf ? Json(nullptr) : Json(r.objective);
  doc["dual_value"] = std::isfinite(r.dual_value) ? Json(r.dual_value) : Json(nullptr);
  doc["gap"] = std::isfinite(r.gap) ? Json(r.gap) : Json(nullptr);
  doc["relative_gap"] = std::isfinite(r.relative_gap) ? Json(r.relative_gap) : Json(nullptr);
  doc["iterations"] = r.iterations;
  auto exact = [](const Vec& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? Json(x) : Json(nullptr));
    return a;
  };
  auto exact_list = [&](const std::vector<Vec>& vs) {
    Json a = Json::array();
    for (const Vec& v : vs) a.push_back(exact(v));
    return a;
  };
  doc["nu"] = exact(r.nu);
  doc["eta"] = exact_list(r.eta);
  doc["flows"] = exact_list(r.flows);
  doc["y"] = exact(r.y);
  return doc.dump(indent);
}

inline ResultFile parse_result(const std::string& text) {
  using namespace io_detail;
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  const Json& ver = member(doc, "version", "$");
  if (!ver.is_string() || ver.get<std::string>() != kResultVersion) {
    throw ParseError(std::string("$.version: expected \"") + kResultVersion + "\"");
  }
  ResultFile r;
  r.status = doc.value("status", "");
  r.solved = doc.value("solved", false);
  r.objective = doc.contains("objective") && !doc["objective"].is_null()
                    ? doc["objective"].get<double>()
                    : -kInf;
  r.dual_value = real_or_inf(member(doc, "dual_value", "$"));
  r.gap = real_or_inf(member(doc, "gap", "$"));
  r.relative_gap = real_or_inf(member(doc, "relative_gap", "$"));
  r.iterations = doc.value("iterations", 0);
  r.nu = vec_from(member(doc, "nu", "$"), "$.nu");
  r.eta = vecs_from(member(doc, "eta", "$"), "$.eta");
  r.flows = vecs_from(member(doc, "flows", "$"), "$.flows");
  r.y = vec_from(member(doc, "y", "$"), "$.y");
  return r;
}

}  // namespace convexflows

namespace convexflows {

// Independent re-evaluation of a result file against its instance.
struct CheckReport {
  bool ok = true;
  double net_flow_mismatch = 0.0;
  std::size_t non_members = 0;
  double primal_value = -kInf;
  double dual_value = kInf;
  double gap = kInf;
  double relative_gap = kInf;
  std::vector<std::string> problems;

  void fail(std::string why) {
    ok = false;
    problems.push_back(std::move(why));
  }
};

inline CheckReport check_result(const ProblemInstance& inst, const ResultFile& r,
                                double tol = 1e-6) {
  CheckReport rep;
  const std::size_t n = inst.num_nodes();
  const std::size_t m = inst.num_edges();
  if (r.nu.size() != n || r.y.size() != n || r.eta.size() != m || r.flows.size() != m) {
    rep.fail("result dimensions do not match the instance");
    return rep;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t ni = inst.edge(i).incidence.size();
    if (r.flows[i].size() != ni || r.eta[i].size() != ni) {
      rep.fail("edge " + std::to_string(i) + " has vectors of the wrong length");
      return rep;
    }
  }

  PrimalPoint p{r.flows, r.y};
  const Vec routed = assemble_net_flow(inst, r.flows);
  for (std::size_t j = 0; j < n; ++j) {
    rep.net_flow_mismatch = std::max(rep.net_flow_mismatch, std::abs(routed[j] - r.y[j]));
  }
  if (rep.net_flow_mismatch > tol * (1.0 + norm_inf(r.y))) {
    rep.fail("y differs from the routed edge flows by " + std::to_string(rep.net_flow_mismatch));
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!inst.edge(i).oracle->is_member(r.flows[i], tol)) ++rep.non_members;
  }
  if (rep.non_members > 0) {
    rep.fail(std::to_string(rep.non_members) + " edge flow(s) outside their allowable set");
  }

  rep.primal_value = primal_objective(inst, p, tol);
  const bool has_objective = r.objective != -kInf;
  if (rep.primal_value == -kInf) {
    if (has_objective) rep.fail("net flow violates the objective's constraints");
  } else if (!has_objective ||
             std::abs(rep.primal_value - r.objective) > tol * (1.0 + std::abs(rep.primal_value))) {
    rep.fail("stated objective does not match the recomputed primal value");
  }

  DualPoint mu{r.nu, r.eta};
  rep.dual_value = eval_dual(inst, mu).value;
  if (!std::isfinite(rep.dual_value)) {
    rep.fail("dual point lies outside the dual domain");
  } else if (!std::isfinite(r.dual_value) ||
             std::abs(rep.dual_value - r.dual_value) > tol * (1.0 + std::abs(rep.dual_value))) {
    rep.fail("stated dual value does not match the recomputed dual value");
  }

  if (rep.primal_value != -kInf && std::isfinite(rep.dual_value)) {
    rep.gap = rep.dual_value - rep.primal_value;
    rep.relative_gap = relative_gap(rep.gap, rep.dual_value);
    if (rep.relative_gap < -tol) rep.fail("weak duality violated: gap is negative");
    if (r.solved && rep.relative_gap > tol) {
      rep.fail("result claims solved but the relative gap is " + std::to_string(rep.relative_gap));
    }
  } else if (r.solved) {
    rep.fail("result claims solved but no finite gap could be computed");
  }
  return rep;
}

}  // namespace convexflows
