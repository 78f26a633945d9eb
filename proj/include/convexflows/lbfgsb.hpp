#pragma once

// Limited-memory quasi-Newton over a box  l <= x <= u  (u may be +inf).
//
// Two-metric projection: coordinates in the epsilon-active set move along the
// negative gradient, the rest along the L-BFGS direction restricted to them,
// and trial points follow the projected path P(x + a d). The objective may
// return +inf; the line search then shrinks the step. Curvature is only
// enforced when the trial step does not touch a bound.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>

#include "convexflows/common.hpp"

namespace convexflows {

struct LbfgsbOptions {
  double grad_tol = 1e-7;  // relative to max(1, |f|)
  int max_iter = 1000;
  int memory = 10;
  double shrink = 0.5;
  int max_line_search = 60;
  // Stop after this many iterations in which neither f decreases (relative
  // 1e-15) nor the projected gradient halves its best value.
  int stall_window = 20;
};

struct LbfgsbIterate {
  int iter;
  double f;
  double pg_norm;
};

struct LbfgsbResult {
  Vec x;
  double f = kInf;
  double pg_norm = kInf;
  int iterations = 0;
  bool converged = false;
  std::string status;
};

// Returns f(x) and writes the gradient, or returns +inf (gradient unused).
using BoxObjective = std::function<double(std::span<const double>, std::span<double>)>;
using IterationCallback = std::function<void(const LbfgsbIterate&, std::span<const double>)>;

inline double projected_gradient_norm(std::span<const double> x, std::span<const double> g,
                                      std::span<const double> lo,
                                      std::span<const double> hi) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double gi = g[i];
    if (x[i] <= lo[i] && gi > 0.0) gi = 0.0;
    if (x[i] >= hi[i] && gi < 0.0) gi = 0.0;
    m = std::max(m, std::abs(gi));
  }
  return m;
}

class Lbfgsb {
 public:
  static constexpr double kRoundoff = 1e-13;

  Lbfgsb(Vec lower, Vec upper, LbfgsbOptions opts)
      : lo_(std::move(lower)), hi_(std::move(upper)), opts_(opts) {
    if (lo_.size() != hi_.size()) throw DimensionError("bound vectors differ in length");
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      if (!(lo_[i] <= hi_[i])) throw DimensionError("empty box");
    }
  }

  LbfgsbResult minimize(const BoxObjective& fun, Vec x0,
                        const IterationCallback& cb = {}) {
    const std::size_t n = lo_.size();
    if (x0.size() != n) throw DimensionError("start point has wrong length");
    project(x0);
    Vec g(n, 0.0);
    LbfgsbResult res;
    res.x = std::move(x0);
    res.f = fun(res.x, g);
    if (!std::isfinite(res.f)) {
      throw InfeasibleStartError(
          "objective is not finite at the projected start point; the start lies "
          "outside the domain of a conjugate or support function");
    }
    s_.clear();
    y_.clear();
    // Acceptance tolerates round-off increases in f, so the lowest iterate
    // is kept and returned whatever the stopping reason. Differences at
    // round-off level keep the last iterate, whose gradient is better.
    Vec best_x = res.x;
    double best_f = res.f, best_pg_at = kInf;
    auto finish = [&](LbfgsbResult& r) -> LbfgsbResult& {
      if (best_f < r.f - kRoundoff * (1.0 + std::abs(r.f))) {
        r.x = best_x;
        r.f = best_f;
        r.pg_norm = best_pg_at;
      }
      return r;
    };
    Vec xn(n), gn(n), d(n);
    double best_recent = res.f;
    double best_pg = kInf;
    int since_progress = 0;
    for (int k = 0;; ++k) {
      res.iterations = k;
      res.pg_norm = projected_gradient_norm(res.x, g, lo_, hi_);
      if (cb) cb(LbfgsbIterate{k, res.f, res.pg_norm}, res.x);
      if (res.f <= best_f) {
        best_x = res.x;
        best_f = res.f;
        best_pg_at = res.pg_norm;
      }
      if (res.pg_norm <= opts_.grad_tol * std::max(1.0, std::abs(res.f))) {
        res.converged = true;
        res.status = "converged";
        return finish(res);
      }
      if (k >= opts_.max_iter) {
        res.status = "max_iter";
        return finish(res);
      }

      bool stepped = false;
      for (int attempt = 0; attempt < 2 && !stepped; ++attempt) {
        if (attempt == 1) {
          if (s_.empty()) break;
          s_.clear();
          y_.clear();
        }
        direction(res.x, g, res.pg_norm, d);
        stepped = line_search(fun, res.x, res.f, g, d, xn, gn);
      }
      if (!stepped) {
        res.status = "line_search_failed";
        return finish(res);
      }

      Vec s(n), y(n);
      double sy = 0.0, ss = 0.0, yy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = xn[i] - res.x[i];
        y[i] = gn[i] - g[i];
        sy += s[i] * y[i];
        ss += s[i] * s[i];
        yy += y[i] * y[i];
      }
      if (sy > 1e-10 * std::sqrt(ss * yy)) {
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
        if (static_cast<int>(s_.size()) > opts_.memory) {
          s_.pop_front();
          y_.pop_front();
        }
      }
      std::swap(res.x, xn);
      std::swap(g, gn);
      res.f = last_f_;

      const double pg_new = projected_gradient_norm(res.x, g, lo_, hi_);
      if (res.f < best_recent - 1e-15 * std::max(1.0, std::abs(best_recent)) ||
          pg_new < 0.5 * best_pg) {
        best_recent = std::min(best_recent, res.f);
        best_pg = std::min(best_pg, pg_new);
        since_progress = 0;
      } else if (++since_progress >= opts_.stall_window) {
        res.iterations = k + 1;
        res.pg_norm = projected_gradient_norm(res.x, g, lo_, hi_);
        if (cb) cb(LbfgsbIterate{k + 1, res.f, res.pg_norm}, res.x);
        if (res.f <= best_f) {
          best_f = res.f;
          best_x = res.x;
          best_pg_at = res.pg_norm;
        }
        res.status = "stalled";
        return finish(res);
      }
    }
  }

 private:
  void project(std::span<double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo_[i], hi_[i]);
  }

  void direction(std::span<const double> x, std::span<const double> g, double pg_norm,
                 std::span<double> d) {
    const std::size_t n = x.size();
    const double eps = std::min(pg_norm, 1e-3);
    free_.assign(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      if ((x[i] <= lo_[i] + eps && g[i] > 0.0) || (x[i] >= hi_[i] - eps && g[i] < 0.0)) {
        free_[i] = false;
      }
      if (lo_[i] == hi_[i]) free_[i] = false;
    }
    // Two-loop recursion on the free coordinates.
    Vec q(g.begin(), g.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (!free_[i]) q[i] = 0.0;
    }
    const std::size_t m = s_.size();
    Vec alpha(m, 0.0), rho(m, 0.0);
    auto fdot = [&](const Vec& a, const Vec& b) {
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (free_[i]) t += a[i] * b[i];
      }
      return t;
    };
    double scale = 1.0;
    bool have_scale = false;
    for (std::size_t j = m; j-- > 0;) {
      const double sy = fdot(s_[j], y_[j]);
      if (!(sy > 0.0)) continue;
      rho[j] = 1.0 / sy;
      alpha[j] = rho[j] * fdot(s_[j], q);
      for (std::size_t i = 0; i < n; ++i) {
        if (free_[i]) q[i] -= alpha[j] * y_[j][i];
      }
      if (!have_scale) {
        scale = sy / fdot(y_[j], y_[j]);
        have_scale = true;
      }
    }
    if (!have_scale) {
      // No curvature yet: a unit-length first step in the infinity norm.
      scale = 1.0 / std::max(1.0, pg_norm);
    }
    for (std::size_t i = 0; i < n; ++i) q[i] *= scale;
    for (std::size_t j = 0; j < m; ++j) {
      if (rho[j] == 0.0) continue;
      const double beta = rho[j] * fdot(y_[j], q);
      for (std::size_t i = 0; i < n; ++i) {
        if (free_[i]) q[i] += (alpha[j] - beta) * s_[j][i];
      }
    }
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = free_[i] ? -q[i] : -g[i] * scale;
      if (lo_[i] == hi_[i]) d[i] = 0.0;
      gd += g[i] * d[i];
    }
    if (!(gd < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) d[i] = lo_[i] == hi_[i] ? 0.0 : -g[i] * scale;
    }
  }

  bool line_search(const BoxObjective& fun, std::span<const double> x, double f,
                   std::span<const double> g, std::span<const double> d, Vec& xn,
                   Vec& gn) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    const double noise = 1e-12 * (1.0 + std::abs(f));
    const std::size_t n = x.size();
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) gd += g[i] * d[i];
    double a = 1.0;
    double a_lo = 0.0;
    double a_hi = kInf;
    bool have_lo = false;
    Vec x_lo, g_lo;
    double f_lo = f;
    for (int it = 0; it < opts_.max_line_search; ++it) {
      bool clipped = false;
      double decrease = 0.0;
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = x[i] + a * d[i];
        xn[i] = std::clamp(t, lo_[i], hi_[i]);
        if (xn[i] != t) clipped = true;
        if (xn[i] != x[i]) moved = true;
        decrease += g[i] * (xn[i] - x[i]);
      }
      if (!moved) break;
      const double fn = fun(xn, gn);
      bool armijo = std::isfinite(fn) && fn <= f + c1 * decrease && decrease < 0.0;
      if (!armijo && std::isfinite(fn) && decrease < 0.0 && fn <= f + noise) {
        // Near the optimum the change in f drowns in round-off; fall back to
        // the approximate Wolfe test on the slope along the actual step.
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) slope += gn[i] * (xn[i] - x[i]);
        if (slope <= (2.0 * c1 - 1.0) * decrease && slope >= c2 * decrease) {
          last_f_ = fn;
          return true;
        }
      }
      if (!armijo) {
        a_hi = a;
      } else if (clipped) {
        last_f_ = fn;
        return true;
      } else {
        double gnd = 0.0;
        for (std::size_t i = 0; i < n; ++i) gnd += gn[i] * d[i];
        if (gnd >= c2 * gd) {
          last_f_ = fn;
          return true;
        }
        a_lo = a;
        have_lo = true;
        x_lo = xn;
        g_lo = gn;
        f_lo = fn;
      }
      a = std::isfinite(a_hi) ? (have_lo ? 0.5 * (a_lo + a_hi) : a_hi * opts_.shrink)
                              : 2.0 * a;
    }
    if (have_lo) {
      xn = std::move(x_lo);
      gn = std::move(g_lo);
      last_f_ = f_lo;
      return true;
    }
    return false;
  }

  Vec lo_;
  Vec hi_;
  LbfgsbOptions opts_;
  std::deque<Vec> s_;
  std::deque<Vec> y_;
  std::vector<bool> free_;
  double last_f_ = kInf;
};

}  // namespace convexflows
