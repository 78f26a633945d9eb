#pragma once

// Bundled net-flow and edge utilities, each exposed through its conjugate
//   conj(nu) = sup_y ( U(y) - nu^T y ).
// All utilities are nondecreasing, so conj is +inf off the nonnegative orthant.

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "convexflows/common.hpp"
#include "convexflows/oracle.hpp"

namespace convexflows {

namespace detail {

inline bool any_negative(std::span<const double> v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return x < 0.0; });
}

inline double slack(std::span<const double> y, double tol) {
  return tol * (1.0 + norm_inf(y));
}

inline void check_dim(std::size_t got, std::size_t want) {
  if (got != want) throw DimensionError("objective argument has wrong length");
}

}  // namespace detail

// U(y) = c^T y - I(y >= 0).
class LinearNonneg final : public ConjugateOracle {
 public:
  explicit LinearNonneg(Vec c) : c_(std::move(c)) {
    if (c_.empty() || detail::any_negative(c_)) {
      throw ValidationError("linear_nonneg needs a nonempty c >= 0");
    }
  }

  const Vec& c() const { return c_; }
  std::size_t dimension() const override { return c_.size(); }

  ConjEval conj(std::span<const double> nu) const override {
    detail::check_dim(nu.size(), c_.size());
    bool strict = true;
    for (std::size_t j = 0; j < c_.size(); ++j) {
      if (nu[j] < c_[j]) return {kInf, {}, false};
      if (nu[j] == c_[j]) strict = false;
    }
    // y = 0 is the only maximizer unless some price sits on its bound.
    return {0.0, Vec(c_.size(), 0.0), strict};
  }

  double evaluate_primal(std::span<const double> y, double tol = 0.0) const override {
    detail::check_dim(y.size(), c_.size());
    const double s = detail::slack(y, tol);
    for (double v : y) {
      if (v < -s) return -kInf;
    }
    return dot(c_, y);
  }

  Vec lower_bounds() const override { return c_; }

  Vec default_start() const override {
    Vec s(c_.size());
    for (std::size_t j = 0; j < c_.size(); ++j) s[j] = std::max(c_[j], 1e-3);
    return s;
  }

  double domain_violation(std::span<const double> y) const override {
    double v = 0.0;
    for (double x : y) v = std::max(v, -x);
    return v;
  }

  // Complementary slackness: y_j = 0 wherever nu_j sits above c_j.
  RecoveryTarget recovery_target(std::span<const double> nu,
                                 const ConjEval&) const override {
    RecoveryTarget t{Vec(c_.size(), 0.0), std::vector<bool>(c_.size(), false)};
    for (std::size_t j = 0; j < c_.size(); ++j) {
      t.mask[j] = nu[j] - c_[j] > 1e-6 * (1.0 + c_[j]);
    }
    return t;
  }

  OracleSpec spec() const override { return {"linear_nonneg", {}, {{"c", c_}}}; }

 private:
  Vec c_;
};

// Generators with quadratic cost: U(y) = -sum_j (1/2) (d_j - y_j)_+^2.
class OpfQuadratic final : public ConjugateOracle {
 public:
  explicit OpfQuadratic(Vec d) : d_(std::move(d)) {
    if (d_.empty()) throw ValidationError("opf_quadratic needs demands");
  }

  const Vec& demand() const { return d_; }
  std::size_t dimension() const override { return d_.size(); }

  ConjEval conj(std::span<const double> nu) const override {
    detail::check_dim(nu.size(), d_.size());
    if (detail::any_negative(nu)) return {kInf, {}, false};
    ConjEval out{0.0, Vec(d_.size()), true};
    for (std::size_t j = 0; j < d_.size(); ++j) {
      out.value += 0.5 * nu[j] * nu[j] - d_[j] * nu[j];
      out.maximizer[j] = d_[j] - nu[j];
    }
    return out;
  }

  double evaluate_primal(std::span<const double> y, double = 0.0) const override {
    detail::check_dim(y.size(), d_.size());
    double u = 0.0;
    for (std::size_t j = 0; j < d_.size(); ++j) {
      const double short_j = std::max(d_[j] - y[j], 0.0);
      u -= 0.5 * short_j * short_j;
    }
    return u;
  }

  OracleSpec spec() const override { return {"opf_quadratic", {}, {{"d", d_}}}; }

 private:
  Vec d_;
};

// Maximum flow from node 0 to node n-1: U(y) = y_{n-1} - I_S(y) with
//   S = { y : y_0 + y_{n-1} >= 0, y_j >= 0 for interior j }.
class MaxFlow final : public ConjugateOracle {
 public:
  explicit MaxFlow(std::size_t n) : n_(n) {
    if (n < 2) throw ValidationError("maxflow needs at least two nodes");
  }

  std::size_t dimension() const override { return n_; }

  ConjEval conj(std::span<const double> nu) const override {
    detail::check_dim(nu.size(), n_);
    const double src = nu[0];
    const double snk = nu[n_ - 1];
    bool ok = snk >= 1.0 && std::abs(snk - src - 1.0) <= 1e-12 * (1.0 + snk);
    for (std::size_t j = 1; ok && j + 1 < n_; ++j) ok = nu[j] >= 0.0;
    if (!ok) return {kInf, {}, false};
    return {0.0, Vec(n_, 0.0), false};
  }

  double evaluate_primal(std::span<const double> y, double tol = 0.0) const override {
    detail::check_dim(y.size(), n_);
    if (domain_violation(y) > detail::slack(y, tol)) return -kInf;
    return y[n_ - 1];
  }

  std::vector<FixedCoordinate> fixed_coordinates() const override {
    return {{0, 0.0}, {n_ - 1, 1.0}};
  }

  // Distinct interior prices in [1/4, 3/4]. Equal prices put every interior
  // edge on a kink of its support function, where the reported gradient is
  // rarely a descent direction.
  Vec default_start() const override {
    Vec s(n_);
    const double golden = 0.6180339887498949;
    for (std::size_t j = 0; j < n_; ++j) {
      const double frac = std::fmod(static_cast<double>(j) * golden, 1.0);
      s[j] = 0.25 + 0.5 * frac;
    }
    s[0] = 0.0;
    s[n_ - 1] = 1.0;
    return s;
  }

  double domain_violation(std::span<const double> y) const override {
    double v = std::max(0.0, -(y[0] + y[n_ - 1]));
    for (std::size_t j = 1; j + 1 < n_; ++j) v = std::max(v, -y[j]);
    return v;
  }

  // Interior conservation; source and sink are left free.
  RecoveryTarget recovery_target(std::span<const double>, const ConjEval&) const override {
    RecoveryTarget t{Vec(n_, 0.0), std::vector<bool>(n_, true)};
    t.mask[0] = false;
    t.mask[n_ - 1] = false;
    return t;
  }

  bool integral_cut_structure() const override { return true; }

  OracleSpec spec() const override { return {"maxflow", {}, {}}; }

 private:
  std::size_t n_;
};

// Route at least v units from node 0 to node n-1: U(y) = -I(y in S~) with
//   S~ = { y : y_{n-1} >= v, y_0 + y_{n-1} >= 0, y_j >= 0 for interior j }.
// Edge costs enter through edge utilities.
class MinCost final : public ConjugateOracle {
 public:
  MinCost(std::size_t n, double v) : n_(n), v_(v) {
    if (n < 2) throw ValidationError("mincost needs at least two nodes");
    if (!(v >= 0.0)) throw ValidationError("mincost flow target must be >= 0");
  }

  double target() const { return v_; }
  std::size_t dimension() const override { return n_; }

  ConjEval conj(std::span<const double> nu) const override {
    detail::check_dim(nu.size(), n_);
    if (detail::any_negative(nu)) return {kInf, {}, false};
    const double src = nu[0];
    const double snk = nu[n_ - 1];
    if (src > snk) return {kInf, {}, false};
    Vec y(n_, 0.0);
    y[0] = -v_;
    y[n_ - 1] = v_;
    bool unique = src > 0.0 && snk > src;
    for (std::size_t j = 1; unique && j + 1 < n_; ++j) unique = nu[j] > 0.0;
    return {v_ * (src - snk), std::move(y), unique};
  }

  double evaluate_primal(std::span<const double> y, double tol = 0.0) const override {
    detail::check_dim(y.size(), n_);
    return domain_violation(y) > detail::slack(y, tol) ? -kInf : 0.0;
  }

  double domain_violation(std::span<const double> y) const override {
    double v = std::max({0.0, -(y[0] + y[n_ - 1]), v_ - y[n_ - 1]});
    for (std::size_t j = 1; j + 1 < n_; ++j) v = std::max(v, -y[j]);
    return v;
  }

  OracleSpec spec() const override { return {"mincost", {{"v", v_}}, {}}; }

 private:
  std::size_t n_;
  double v_;
};

// Linear Fisher market. Nodes 0..n_b-1 are buyers, the next n_g are goods:
//   U(y) = sum_i b_i log y_i - I(y_goods >= -1).
class FisherMarket final : public ConjugateOracle {
 public:
  FisherMarket(Vec budgets, std::size_t n_goods)
      : b_(std::move(budgets)), ng_(n_goods) {
    if (b_.empty() || ng_ == 0) throw ValidationError("fisher needs buyers and goods");
    if (detail::any_negative(b_)) throw ValidationError("budgets must be >= 0");
  }

  const Vec& budgets() const { return b_; }
  std::size_t num_buyers() const { return b_.size(); }
  std::size_t num_goods() const { return ng_; }
  std::size_t dimension() const override { return b_.size() + ng_; }

  ConjEval conj(std::span<const double> nu) const override {
    detail::check_dim(nu.size(), dimension());
    if (detail::any_negative(nu)) return {kInf, {}, false};
    ConjEval out{0.0, Vec(dimension(), 0.0), true};
    for (std::size_t i = 0; i < b_.size(); ++i) {
      if (b_[i] == 0.0) continue;
      if (nu[i] == 0.0) return {kInf, {}, false};
      out.value += b_[i] * std::log(b_[i] / nu[i]) - b_[i];
      out.maximizer[i] = b_[i] / nu[i];
    }
    for (std::size_t j = b_.size(); j < dimension(); ++j) {
      out.value += nu[j];
      out.maximizer[j] = -1.0;
      if (nu[j] == 0.0) out.unique = false;
    }
    return out;
  }

  double evaluate_primal(std::span<const double> y, double tol = 0.0) const override {
    detail::check_dim(y.size(), dimension());
    const double s = detail::slack(y, tol);
    double u = 0.0;
    for (std::size_t i = 0; i < b_.size(); ++i) {
      if (b_[i] == 0.0) {
        if (y[i] < -s) return -kInf;
        continue;
      }
      if (y[i] <= 0.0) return -kInf;
      u += b_[i] * std::log(y[i]);
    }
    for (std::size_t j = b_.size(); j < dimension(); ++j) {
      if (y[j] < -1.0 - s) return -kInf;
    }
    return u;
  }

  double domain_violation(std::span<const double> y) const override {
    double v = 0.0;
    for (std::size_t i = 0; i < b_.size(); ++i) v = std::max(v, -y[i]);
    for (std::size_t j = b_.size(); j < dimension(); ++j) v = std::max(v, -1.0 - y[j]);
    return v;
  }

  // Budgets fully spent and every priced good sold.
  RecoveryTarget recovery_target(std::span<const double> nu,
                                 const ConjEval& at_nu) const override {
    RecoveryTarget t{at_nu.maximizer, std::vector<bool>(dimension(), true)};
    for (std::size_t i = 0; i < b_.size(); ++i) t.mask[i] = b_[i] > 0.0;
    for (std::size_t j = b_.size(); j < dimension(); ++j) t.mask[j] = nu[j] > 0.0;
    return t;
  }

  OracleSpec spec() const override {
    return {"fisher", {{"n_goods", static_cast<double>(ng_)}}, {{"budgets", b_}}};
  }

 private:
  Vec b_;
  std::size_t ng_;
};

// Edge utility V(x) = -(1/2) |x_-|^2 penalizing tendered amounts.
class QuadraticPenalty final : public ConjugateOracle {
 public:
  explicit QuadraticPenalty(std::size_t n) : n_(n) {}

  std::size_t dimension() const override { return n_; }

  ConjEval conj(std::span<const double> xi) const override {
    detail::check_dim(xi.size(), n_);
    if (detail::any_negative(xi)) return {kInf, {}, false};
    ConjEval out{0.5 * dot(xi, xi), Vec(n_), true};
    for (std::size_t j = 0; j < n_; ++j) out.maximizer[j] = -xi[j];
    return out;
  }

  double evaluate_primal(std::span<const double> x, double = 0.0) const override {
    detail::check_dim(x.size(), n_);
    double v = 0.0;
    for (double xj : x) {
      if (xj < 0.0) v -= 0.5 * xj * xj;
    }
    return v;
  }

  OracleSpec spec() const override { return {"quadratic_penalty", {}, {}}; }

 private:
  std::size_t n_;
};

}  // namespace convexflows
