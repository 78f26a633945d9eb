#pragma once

// Two-node edges: input w at local node 0, output h(w) at local node 1.
// The support function reduces to the scalar problem
//   maximize  -eta1 * w + eta2 * h(w)
// whose solution is characterized by eta2 h+(w) <= eta1 <= eta2 h-(w).

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <variant>

#include "convexflows/common.hpp"
#include "convexflows/gain.hpp"
#include "convexflows/oracle.hpp"

namespace convexflows {

struct BoundedEdgeData {
  double w_max;
  double w_min;
  double price_lo;  // h-(w_max)
  double price_hi;  // h+(w_min)
};

inline std::optional<BoundedEdgeData> bounded_data(const GainFunction& g) {
  const double w_max = g.w_max();
  const double w_min = g.w_lo();
  if (!std::isfinite(w_max) || !std::isfinite(w_min)) return std::nullopt;
  return BoundedEdgeData{w_max, w_min, g.h_minus(w_max), g.h_plus(w_min)};
}

struct ScalarArbitrage {
  double w = 0.0;
  Vec x;  // (-w, h(w))
  double value = 0.0;
};

namespace detail {

inline void check_prices(double eta1, double eta2) {
  if (!(eta1 >= 0.0) || !(eta2 >= 0.0)) {
    throw InvalidEdgeError("edge prices must be nonnegative");
  }
}

inline double arb_objective(const GainFunction& g, double eta1, double eta2, double w) {
  const double hw = g.h(w);
  if (hw == -kInf) return -kInf;
  return -eta1 * w + (eta2 == 0.0 ? 0.0 : eta2 * hw);
}

inline ScalarArbitrage make_result(const GainFunction& g, double eta1, double eta2,
                                   double w) {
  const double hw = g.h(w);
  return ScalarArbitrage{w, Vec{-w, hw}, arb_objective(g, eta1, eta2, w)};
}

// Smallest w with eta2 h+(w) <= eta1, by bisection.
inline double bisect_root(const GainFunction& g, double eta1, double eta2) {
  auto above = [&](double w) { return eta2 * g.h_plus(w) > eta1; };
  double lo = g.w_lo();
  double hi = g.w_hi();
  if (!std::isfinite(lo)) {
    lo = std::isfinite(hi) ? std::min(-1.0, hi - 1.0) : -1.0;
    while (!above(lo)) {
      lo *= 2.0;
      if (lo < -1e15) throw UnboundedSubproblemError("edge subproblem unbounded below");
    }
  }
  if (!above(lo)) return lo;
  if (!std::isfinite(hi)) {
    hi = std::max(1.0, lo + 1.0);
    while (above(hi)) {
      hi = 2.0 * hi + 1.0;
      if (hi > 1e15) throw UnboundedSubproblemError("edge subproblem unbounded above");
    }
  }
  const double span = std::isfinite(g.w_hi() - g.w_lo()) ? g.w_hi() - g.w_lo() : hi - lo;
  const double tol = 1e-10 * std::max(1.0, span);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (above(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // On a piecewise-linear boundary h+ is a step function, so its crossing
  // is a breakpoint; return it exactly when the bracket holds one.
  for (const auto& [a, b, slope] : g.linear_segments()) {
    (void)slope;
    for (double w : {a, b}) {
      if (w >= lo && w <= hi && eta2 * g.h_plus(w) <= eta1 &&
          (w <= g.w_lo() || eta2 * g.h_minus(w) >= eta1)) {
        return w;
      }
    }
  }
  // The bracket ends and the domain ends are all candidates; keep the best.
  double best = hi;
  double best_val = arb_objective(g, eta1, eta2, hi);
  for (double w : {lo, g.w_lo(), g.w_hi()}) {
    if (!std::isfinite(w)) continue;
    const double v = arb_objective(g, eta1, eta2, w);
    if (v > best_val) {
      best = w;
      best_val = v;
    }
  }
  return best;
}

inline double golden_section(const GainFunction& g, double eta1, double eta2) {
  auto f = [&](double w) { return arb_objective(g, eta1, eta2, w); };
  double lo = g.w_lo();
  double hi = g.w_hi();
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw UnboundedSubproblemError(
        "derivative-free scalar arbitrage needs a bounded gain domain");
  }
  const double tol = 1e-10 * std::max(1.0, hi - lo);
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - r * (hi - lo);
  double b = lo + r * (hi - lo);
  double fa = f(a);
  double fb = f(b);
  while (hi - lo > tol) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + r * (hi - lo);
      fb = f(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - r * (hi - lo);
      fa = f(a);
    }
  }
  double best = 0.5 * (lo + hi);
  double best_val = f(best);
  for (double w : {g.w_lo(), g.w_hi()}) {
    if (f(w) > best_val) {
      best = w;
      best_val = f(w);
    }
  }
  return best;
}

}  // namespace detail

inline bool no_flow_check(const GainFunction& g, double eta1, double eta2) {
  detail::check_prices(eta1, eta2);
  if (0.0 < g.w_lo() || 0.0 > g.w_hi()) return false;
  if (eta2 == 0.0) return eta1 == 0.0 || g.h_minus(0.0) == kInf;
  return eta2 * g.h_plus(0.0) <= eta1 && eta1 <= eta2 * g.h_minus(0.0);
}

struct NoSolveLow {
  double w;
};
struct NoSolveHigh {
  double w;
};
struct MustSolve {};
using ActiveInterval = std::variant<NoSolveLow, NoSolveHigh, MustSolve>;

inline ActiveInterval active_interval_check(const BoundedEdgeData& b, double eta1,
                                            double eta2) {
  detail::check_prices(eta1, eta2);
  if (eta2 == 0.0) return NoSolveHigh{b.w_min};
  if (eta1 <= eta2 * b.price_lo) return NoSolveLow{b.w_max};
  if (eta1 >= eta2 * b.price_hi) return NoSolveHigh{b.w_min};
  return MustSolve{};
}

inline ScalarArbitrage solve_scalar_arbitrage(const GainFunction& g, double eta1,
                                              double eta2, const EvalOptions& opts = {}) {
  detail::check_prices(eta1, eta2);
  if (eta2 == 0.0) {
    // Output is worthless: tender as little as the domain allows.
    const double w = eta1 > 0.0 ? g.w_lo() : std::clamp(0.0, g.w_lo(), g.w_hi());
    if (!std::isfinite(w)) {
      throw UnboundedSubproblemError("edge accepts unbounded negative input");
    }
    return detail::make_result(g, eta1, eta2, w);
  }
  if (opts.use_shortcuts) {
    if (no_flow_check(g, eta1, eta2)) return detail::make_result(g, eta1, eta2, 0.0);
    if (auto b = bounded_data(g)) {
      const ActiveInterval a = active_interval_check(*b, eta1, eta2);
      if (auto* low = std::get_if<NoSolveLow>(&a)) {
        return detail::make_result(g, eta1, eta2, low->w);
      }
      if (auto* high = std::get_if<NoSolveHigh>(&a)) {
        return detail::make_result(g, eta1, eta2, high->w);
      }
    }
  }
  const double w = g.has_derivative() ? detail::bisect_root(g, eta1, eta2)
                                      : detail::golden_section(g, eta1, eta2);
  return detail::make_result(g, eta1, eta2, w);
}

inline ScalarArbitrage opf_arbitrage(double alpha, double beta, double capacity,
                                     double eta1, double eta2) {
  const double w = opf_arbitrage_input(alpha, beta, capacity, eta1, eta2);
  OpfLineGain g(alpha, beta, capacity);
  return detail::make_result(g, eta1, eta2, w);
}

class TwoNodeEdge final : public EdgeOracle {
 public:
  explicit TwoNodeEdge(std::shared_ptr<const GainFunction> gain)
      : gain_(std::move(gain)), bounded_(bounded_data(*gain_)) {}

  const GainFunction& gain() const { return *gain_; }
  const std::optional<BoundedEdgeData>& bounded() const { return bounded_; }

  std::size_t dimension() const override { return 2; }

  EdgeEval evaluate(std::span<const double> eta,
                    const EvalOptions& opts = {}) const override {
    const double e1 = eta[0];
    const double e2 = eta[1];
    if (e1 < 0.0 || e2 < 0.0) {
      return EdgeEval{kInf, Vec{0.0, 0.0}, false, false};
    }
    EdgeEval out;
    std::optional<double> w;
    if (opts.use_shortcuts && e2 > 0.0) {
      if (no_flow_check(*gain_, e1, e2)) {
        w = 0.0;
      } else if (bounded_) {
        const ActiveInterval a = active_interval_check(*bounded_, e1, e2);
        if (auto* low = std::get_if<NoSolveLow>(&a)) w = low->w;
        if (auto* high = std::get_if<NoSolveHigh>(&a)) w = high->w;
      }
    }
    if (!w) w = gain_->closed_form_argmax(e1, e2);
    ScalarArbitrage r = w ? detail::make_result(*gain_, e1, e2, *w)
                          : solve_scalar_arbitrage(*gain_, e1, e2, opts);
    out.value = r.value;
    out.x = std::move(r.x);
    out.unique = e2 > 0.0 && !on_segment(e1, e2, 1e-9);
    return out;
  }

  bool is_member(std::span<const double> x, double tol) const override {
    const double slack = tol * (1.0 + norm_inf(x));
    const double w = -x[0];
    if (w < gain_->w_lo() - slack || w > gain_->w_hi() + slack) return false;
    const double wc = std::clamp(w, gain_->w_lo(), gain_->w_hi());
    return x[1] <= gain_->h(wc) + slack;
  }

  bool is_strictly_convex() const override { return gain_->is_strictly_concave(); }

  Face optimal_face(std::span<const double> eta, double tol) const override {
    const double e1 = eta[0];
    const double e2 = eta[1];
    Face face;
    for (const auto& [a, b, s] : gain_->linear_segments()) {
      if (std::abs(e1 - s * e2) > tol * (e1 + e2) && !(e1 == 0.0 && e2 == 0.0)) {
        continue;
      }
      if (face.base.empty()) face.base = Vec{-a, gain_->h(a)};
      face.generators.push_back(Vec{-(b - a), s * (b - a)});
    }
    if (face.base.empty()) face.base = evaluate(eta).x;
    return face;
  }

  OracleSpec spec() const override { return gain_->spec(); }

 private:
  bool on_segment(double e1, double e2, double tol) const {
    for (const auto& seg : gain_->linear_segments()) {
      if (std::abs(e1 - std::get<2>(seg) * e2) <= tol * (e1 + e2)) return true;
    }
    return false;
  }

  std::shared_ptr<const GainFunction> gain_;
  std::optional<BoundedEdgeData> bounded_;
};

inline std::shared_ptr<TwoNodeEdge> lossless_edge(double capacity) {
  return std::make_shared<TwoNodeEdge>(PiecewiseLinearGain::lossless(capacity));
}

inline std::shared_ptr<TwoNodeEdge> linear_gain_edge(double gain, double capacity) {
  return std::make_shared<TwoNodeEdge>(PiecewiseLinearGain::linear(gain, capacity));
}

inline std::shared_ptr<TwoNodeEdge> piecewise_linear_edge(Vec w, Vec h) {
  return std::make_shared<TwoNodeEdge>(
      std::make_shared<PiecewiseLinearGain>(std::move(w), std::move(h)));
}

inline std::shared_ptr<TwoNodeEdge> opf_line_edge(double alpha, double beta,
                                                  double capacity) {
  return std::make_shared<TwoNodeEdge>(
      std::make_shared<OpfLineGain>(alpha, beta, capacity));
}

// Gain gamma on [0, b] (b may be +inf). The concavity check runs on a probe
// grid and can miss features narrower than its spacing.
inline std::shared_ptr<TwoNodeEdge> concave_gain_edge(
    std::function<double(double)> gamma, double b = kInf,
    std::function<double(double)> dgamma = {}) {
  if (!(b > 0.0)) throw InvalidEdgeError("gain cap must be positive");
  if (!(gamma(0.0) >= 0.0)) throw InvalidEdgeError("gain must satisfy gamma(0) >= 0");
  const double top = std::isfinite(b) ? b : 100.0;
  constexpr int kProbes = 64;
  Vec v(kProbes + 1);
  for (int k = 0; k <= kProbes; ++k) v[k] = gamma(top * k / kProbes);
  const double scale = 1e-10 * (1.0 + norm_inf(v));
  bool strict = true;
  for (int k = 0; k < kProbes; ++k) {
    if (v[k + 1] < v[k] - scale) throw InvalidEdgeError("gain is not nondecreasing");
    if (k == 0) continue;
    const double second = v[k + 1] - 2.0 * v[k] + v[k - 1];
    if (second > scale) throw InvalidEdgeError("gain is not concave");
    if (second > -scale) strict = false;
  }
  return std::make_shared<TwoNodeEdge>(std::make_shared<CallableGain>(
      std::move(gamma), std::move(dgamma), 0.0, b, strict));
}

}  // namespace convexflows
