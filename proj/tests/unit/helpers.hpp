#pragma once

#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "convexflows/convexflows.hpp"

namespace cf = convexflows;

namespace cftest {

inline cf::Edge make_edge(std::shared_ptr<const cf::EdgeOracle> oracle,
                          std::vector<std::size_t> nodes,
                          std::shared_ptr<const cf::ConjugateOracle> utility = nullptr) {
  return cf::Edge{cf::EdgeIncidence(std::move(nodes)), std::move(oracle), std::move(utility)};
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixture_path(const std::string& name) {
  return std::string(CF_FIXTURE_DIR) + "/" + name;
}

inline cf::ProblemInstance fixture(const std::string& name) {
  return cf::parse_instance(read_text(fixture_path(name)));
}

// Max-flow instance from (from, to, capacity) triples.
inline cf::ProblemInstance maxflow_instance(std::size_t n,
                                            const std::vector<std::tuple<int, int, double>>& arcs) {
  std::vector<cf::Edge> edges;
  for (auto [a, b, c] : arcs) {
    edges.push_back(make_edge(cf::lossless_edge(c), {std::size_t(a), std::size_t(b)}));
  }
  return cf::ProblemInstance(n, std::move(edges), std::make_shared<cf::MaxFlow>(n));
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline cf::Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  cf::Vec v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

inline cf::SolverConfig quiet_config() {
  cf::SolverConfig cfg;
  cfg.threads = 1;
  return cfg;
}

}  // namespace cftest
