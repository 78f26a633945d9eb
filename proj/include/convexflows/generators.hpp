#pragma once

// Random instances: power grids, CFMM routing networks and max-flow graphs.
// Each generator is a pure function of (size, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "convexflows/cfmm_edge.hpp"
#include "convexflows/core.hpp"
#include "convexflows/objectives.hpp"
#include "convexflows/two_node_edge.hpp"

namespace convexflows {

inline constexpr double kOpfAlpha = 16.0;
inline constexpr double kOpfBeta = 0.25;

namespace gen_detail {

using Rng = std::mt19937_64;

// Own uniform helpers: the standard distributions are not specified
// bit-for-bit, and generated files should not depend on the library.
inline double unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t below(Rng& rng, std::size_t k) {
  return static_cast<std::size_t>(unit(rng) * static_cast<double>(k)) % k;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[below(rng, v.size())];
}

inline Edge make_edge(std::shared_ptr<const EdgeOracle> oracle, std::vector<std::size_t> nodes) {
  return Edge{EdgeIncidence(std::move(nodes)), std::move(oracle), nullptr};
}

}  // namespace gen_detail

// Nodes uniform in the unit square, each joined to its three nearest
// neighbours plus ceil(0.05 n) random long lines; every line gets a twin in
// the opposite direction with the same capacity.
inline ProblemInstance gen_opf(std::size_t n, std::uint64_t seed) {
  using namespace gen_detail;
  if (n < 2) throw ValidationError("gen_opf needs n >= 2");
  Rng rng(seed);
  std::vector<std::pair<double, double>> pos(n);
  for (auto& p : pos) p = {unit(rng), unit(rng)};

  std::set<std::pair<std::size_t, std::size_t>> lines;
  auto add = [&](std::size_t a, std::size_t b) {
    if (a == b) return false;
    return lines.insert({std::min(a, b), std::max(a, b)}).second;
  };
  const std::size_t k_near = std::min<std::size_t>(3, n - 1);
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::iota(order.begin(), order.end(), 0);
    auto d2 = [&](std::size_t k) {
      const double dx = pos[k].first - pos[j].first;
      const double dy = pos[k].second - pos[j].second;
      return dx * dx + dy * dy;
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d2(a) < d2(b); });
    std::size_t taken = 0;
    for (std::size_t k : order) {
      if (k == j) continue;
      add(j, k);
      if (++taken == k_near) break;
    }
  }
  const std::size_t max_lines = n * (n - 1) / 2;
  const std::size_t n_long = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n)));
  for (std::size_t added = 0; added < n_long && lines.size() < max_lines;) {
    if (add(below(rng, n), below(rng, n))) ++added;
  }

  const std::vector<double> caps{1.0, 2.0, 3.0};
  const std::vector<double> demands{0.5, 1.0, 2.0};
  std::vector<Edge> edges;
  for (auto [a, b] : lines) {
    const double cap = pick(rng, caps);
    edges.push_back(make_edge(opf_line_edge(kOpfAlpha, kOpfBeta, cap), {a, b}));
    edges.push_back(make_edge(opf_line_edge(kOpfAlpha, kOpfBeta, cap), {b, a}));
  }
  Vec d(n);
  for (double& v : d) v = pick(rng, demands);
  return ProblemInstance(n, std::move(edges), std::make_shared<OpfQuadratic>(std::move(d)));
}

inline std::size_t cfmm_asset_count(std::size_t m) {
  return static_cast<std::size_t>(std::ceil(2.0 * std::sqrt(static_cast<double>(m)) - 1e-12));
}

// Pools: constant product (2/5), 4/5-1/5 weighted two-asset (2/5), uniform
// three-asset (1/5). Reserves U[100, 200]; objective c = 1.
inline ProblemInstance gen_cfmm(std::size_t m, std::uint64_t seed, bool penalty = false) {
  using namespace gen_detail;
  if (m < 1) throw ValidationError("gen_cfmm needs m >= 1");
  const std::size_t n = std::max<std::size_t>(2, cfmm_asset_count(m));
  Rng rng(seed);
  std::vector<Edge> edges;
  edges.reserve(m);
  std::vector<std::size_t> assets(n);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = unit(rng);
    std::size_t k = u < 0.8 ? 2 : 3;
    if (k > n) k = 2;
    // Partial Fisher-Yates draws k assets without replacement.
    std::iota(assets.begin(), assets.end(), 0);
    for (std::size_t s = 0; s < k; ++s) std::swap(assets[s], assets[s + below(rng, n - s)]);
    std::vector<std::size_t> nodes(assets.begin(), assets.begin() + static_cast<long>(k));
    Vec R(k);
    for (double& r : R) r = 100.0 + 100.0 * unit(rng);
    std::shared_ptr<const EdgeOracle> pool;
    if (u < 0.4 || k == 3) {
      pool = GeometricMeanPool::uniform(std::move(R));
    } else {
      pool = std::make_shared<GeometricMeanPool>(std::move(R), Vec{0.8, 0.2});
    }
    Edge e = make_edge(std::move(pool), std::move(nodes));
    if (penalty) e.utility = std::make_shared<QuadraticPenalty>(k);
    edges.push_back(std::move(e));
  }
  return ProblemInstance(n, std::move(edges), std::make_shared<LinearNonneg>(Vec(n, 1.0)));
}

// Directed graph with a random source-to-sink path through a subset of the
// interior, plus each other ordered pair with probability `density`. No
// edge enters the source or leaves the sink. Capacities are integers 1..10.
inline ProblemInstance gen_maxflow(std::size_t n, double density, std::uint64_t seed) {
  using namespace gen_detail;
  if (n < 2) throw ValidationError("gen_maxflow needs n >= 2");
  if (!(density > 0.0 && density <= 1.0)) throw ValidationError("density must lie in (0, 1]");
  Rng rng(seed);
  const std::size_t sink = n - 1;
  std::set<std::pair<std::size_t, std::size_t>> arcs;
  std::vector<std::size_t> path{0};
  for (std::size_t j = 1; j < sink; ++j) {
    if (unit(rng) < 0.5) path.push_back(j);
  }
  // Shuffle the interior part of the path.
  for (std::size_t s = path.size(); s > 2; --s) {
    std::swap(path[s - 1], path[1 + below(rng, s - 1)]);
  }
  path.push_back(sink);
  for (std::size_t k = 0; k + 1 < path.size(); ++k) arcs.insert({path[k], path[k + 1]});
  for (std::size_t a = 0; a < sink; ++a) {
    for (std::size_t b = 1; b < n; ++b) {
      if (a == b) continue;
      if (unit(rng) < density) arcs.insert({a, b});
    }
  }
  std::vector<Edge> edges;
  for (auto [a, b] : arcs) {
    const double cap = static_cast<double>(1 + below(rng, 10));
    edges.push_back(make_edge(lossless_edge(cap), {a, b}));
  }
  return ProblemInstance(n, std::move(edges), std::make_shared<MaxFlow>(n));
}

}  // namespace convexflows
