#pragma once

// Buyer edge of a linear Fisher market. Local coordinates are the n_g goods
// followed by the buyer's utility node:
//   T = { (z, t) : -1 <= z <= 0, t <= v^T (-z) }.

#include <cmath>
#include <memory>
#include <span>
#include <utility>

#include "convexflows/common.hpp"
#include "convexflows/oracle.hpp"

namespace convexflows {

struct FisherBasket {
  Vec x;  // (z, t)
  double value = 0.0;
};

// Buy good j exactly when its utility is worth more than its price; ties
// buy nothing.
inline FisherBasket fisher_linear_arbitrage(std::span<const double> v,
                                            std::span<const double> eta) {
  const std::size_t ng = v.size();
  if (eta.size() != ng + 1) throw DimensionError("fisher prices need n_g + 1 entries");
  for (double e : eta) {
    if (!(e >= 0.0)) throw InvalidEdgeError("prices must be nonnegative");
  }
  const double eta_t = eta[ng];
  FisherBasket b{Vec(ng + 1, 0.0), 0.0};
  for (std::size_t j = 0; j < ng; ++j) {
    if (eta_t * v[j] > eta[j]) {
      b.x[j] = -1.0;
      b.x[ng] += v[j];
    }
  }
  b.value = dot(eta, b.x);
  return b;
}

class FisherLinearEdge final : public EdgeOracle {
 public:
  explicit FisherLinearEdge(Vec valuations) : v_(std::move(valuations)) {
    if (v_.empty()) throw InvalidEdgeError("buyer edge needs at least one good");
    for (double vj : v_) {
      if (!(vj >= 0.0) || !std::isfinite(vj)) {
        throw InvalidEdgeError("valuations must be finite and nonnegative");
      }
    }
  }

  const Vec& valuations() const { return v_; }
  std::size_t dimension() const override { return v_.size() + 1; }

  EdgeEval evaluate(std::span<const double> eta, const EvalOptions& = {}) const override {
    for (double e : eta) {
      if (e < 0.0) return EdgeEval{kInf, Vec(dimension(), 0.0), false, false};
    }
    FisherBasket b = fisher_linear_arbitrage(v_, eta);
    EdgeEval out{b.value, std::move(b.x), true, true};
    const double eta_t = eta[v_.size()];
    if (eta_t == 0.0) out.unique = false;
    for (std::size_t j = 0; j < v_.size(); ++j) {
      if (std::abs(eta_t * v_[j] - eta[j]) <= 1e-9 * (eta_t * v_[j] + eta[j])) {
        out.unique = false;
      }
    }
    return out;
  }

  bool is_member(std::span<const double> x, double tol) const override {
    const double slack = tol * (1.0 + norm_inf(x));
    const std::size_t ng = v_.size();
    double u = 0.0;
    for (std::size_t j = 0; j < ng; ++j) {
      if (x[j] < -1.0 - slack || x[j] > slack) return false;
      u -= v_[j] * std::clamp(x[j], -1.0, 0.0);
    }
    return x[ng] <= u + slack;
  }

  bool is_strictly_convex() const override { return false; }

  // Each good tied within tol contributes one generator (buy it, gaining
  // v_j utility); the base point buys only the strictly profitable goods.
  Face optimal_face(std::span<const double> eta, double tol) const override {
    const std::size_t ng = v_.size();
    const double eta_t = eta[ng];
    Face face{Vec(ng + 1, 0.0), {}};
    for (std::size_t j = 0; j < ng; ++j) {
      const double a = eta_t * v_[j];
      if (std::abs(a - eta[j]) <= tol * (a + eta[j])) {
        Vec g(ng + 1, 0.0);
        g[j] = -1.0;
        g[ng] = v_[j];
        face.generators.push_back(std::move(g));
      } else if (a > eta[j]) {
        face.base[j] = -1.0;
        face.base[ng] += v_[j];
      }
    }
    return face;
  }

  OracleSpec spec() const override { return {"fisher_linear", {}, {{"valuations", v_}}}; }

 private:
  Vec v_;
};

}  // namespace convexflows
