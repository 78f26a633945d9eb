#pragma once

// Gain functions of two-node edges: h(w) is the largest output the edge can
// deliver for input w, -inf outside its domain. A concave h parametrizes the
// upper boundary of the allowable set T = { (-w, t) : t <= h(w) }.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "convexflows/common.hpp"

namespace convexflows {

class GainFunction {
 public:
  virtual ~GainFunction() = default;

  virtual double h(double w) const = 0;
  // One-sided derivatives. h_plus is -inf at or right of the domain's upper
  // end; h_minus is +inf at or left of its lower end.
  virtual double h_plus(double w) const = 0;
  virtual double h_minus(double w) const = 0;
  virtual double w_lo() const = 0;
  virtual double w_hi() const = 0;

  virtual bool has_derivative() const { return true; }
  virtual bool is_strictly_concave() const = 0;

  // Maximizer of -eta1 * w + eta2 * h(w) when a closed form exists.
  virtual std::optional<double> closed_form_argmax(double /*eta1*/,
                                                   double /*eta2*/) const {
    return std::nullopt;
  }

  // Segments of a piecewise-linear boundary as (w_start, w_end, slope).
  virtual std::vector<std::tuple<double, double, double>> linear_segments() const {
    return {};
  }

  // Smallest input achieving sup h; +inf when h keeps increasing.
  virtual double w_max() const {
    if (!has_derivative()) return golden_argmax();
    double lo = w_lo();
    double hi = w_hi();
    if (h_plus(lo) <= 0.0) return lo;
    if (!std::isfinite(hi)) {
      hi = std::max(1.0, lo + 1.0);
      while (h_plus(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e15) return kInf;
      }
    }
    const double tol = 1e-12 * std::max(1.0, hi - lo);
    while (hi - lo > tol) {
      double mid = 0.5 * (lo + hi);
      if (h_plus(mid) <= 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  }

  virtual OracleSpec spec() const = 0;

 private:
  double golden_argmax() const {
    double lo = w_lo();
    double hi = w_hi();
    if (!std::isfinite(lo) || !std::isfinite(hi)) return hi;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - r * (hi - lo);
    double b = lo + r * (hi - lo);
    double fa = h(a);
    double fb = h(b);
    while (hi - lo > 1e-12 * std::max(1.0, w_hi() - w_lo())) {
      if (fa < fb) {
        lo = a;
        a = b;
        fa = fb;
        b = lo + r * (hi - lo);
        fb = h(b);
      } else {
        hi = b;
        b = a;
        fb = fa;
        a = hi - r * (hi - lo);
        fa = h(a);
      }
    }
    return h(w_hi()) >= h(0.5 * (lo + hi)) ? w_hi() : 0.5 * (lo + hi);
  }
};

// Concave piecewise-linear gain through breakpoints (w_k, h_k).
class PiecewiseLinearGain final : public GainFunction {
 public:
  PiecewiseLinearGain(Vec w, Vec values, OracleSpec spec = {})
      : w_(std::move(w)), v_(std::move(values)), spec_(std::move(spec)) {
    if (w_.size() < 2 || w_.size() != v_.size()) {
      throw InvalidEdgeError("piecewise-linear gain needs >= 2 matching breakpoints");
    }
    for (std::size_t k = 0; k + 1 < w_.size(); ++k) {
      if (!(w_[k + 1] > w_[k])) {
        throw InvalidEdgeError("gain breakpoints must be strictly increasing");
      }
      slopes_.push_back((v_[k + 1] - v_[k]) / (w_[k + 1] - w_[k]));
      if (k > 0 && slopes_[k] > slopes_[k - 1] * (1.0 + 1e-12) + 1e-12) {
        throw InvalidEdgeError("piecewise-linear gain is not concave");
      }
    }
    if (spec_.kind.empty()) {
      spec_.kind = "piecewise_linear";
      spec_.vectors["w"] = w_;
      spec_.vectors["h"] = v_;
    }
  }

  static std::shared_ptr<PiecewiseLinearGain> lossless(double capacity) {
    if (!(capacity > 0.0)) throw InvalidEdgeError("capacity must be positive");
    OracleSpec s{"lossless", {{"capacity", capacity}}, {}};
    return std::make_shared<PiecewiseLinearGain>(Vec{0.0, capacity},
                                                 Vec{0.0, capacity}, s);
  }

  static std::shared_ptr<PiecewiseLinearGain> linear(double gain, double capacity) {
    if (!(gain >= 0.0) || !(capacity > 0.0)) {
      throw InvalidEdgeError("linear gain needs gain >= 0 and capacity > 0");
    }
    OracleSpec s{"linear_gain", {{"gain", gain}, {"capacity", capacity}}, {}};
    return std::make_shared<PiecewiseLinearGain>(Vec{0.0, capacity},
                                                 Vec{0.0, gain * capacity}, s);
  }

  double h(double w) const override {
    if (w < w_.front() || w > upper()) return -kInf;
    std::size_t k = segment_of(w);
    return v_[k] + slopes_[k] * (w - w_[k]);
  }

  double h_plus(double w) const override {
    if (w < w_.front()) return kInf;
    if (w >= upper()) return -kInf;
    return slopes_[segment_of(w)];
  }

  double h_minus(double w) const override {
    if (w <= w_.front()) return kInf;
    if (w > upper()) return -kInf;
    // Left derivative: segment ending at or after w, approached from below.
    std::size_t k = 0;
    while (k + 1 < slopes_.size() && w > w_[k + 1]) ++k;
    return slopes_[k];
  }

  double w_lo() const override { return w_.front(); }
  double w_hi() const override { return upper(); }
  bool is_strictly_concave() const override { return false; }

  std::optional<double> closed_form_argmax(double eta1, double eta2) const override {
    if (!(eta2 > 0.0)) return std::nullopt;
    // First breakpoint whose right slope no longer beats the price ratio.
    for (std::size_t k = 0; k < slopes_.size(); ++k) {
      if (w_[k] >= upper()) return upper();
      if (eta2 * slopes_[k] <= eta1) return w_[k];
    }
    return upper();
  }

  std::vector<std::tuple<double, double, double>> linear_segments() const override {
    std::vector<std::tuple<double, double, double>> out;
    for (std::size_t k = 0; k < slopes_.size(); ++k) {
      double a = w_[k];
      double b = std::min(w_[k + 1], upper());
      if (b > a) out.emplace_back(a, b, slopes_[k]);
    }
    return out;
  }

  double w_max() const override {
    for (std::size_t k = 0; k < slopes_.size(); ++k) {
      if (w_[k] >= upper()) return upper();
      if (slopes_[k] <= 0.0) return w_[k];
    }
    return upper();
  }

  OracleSpec spec() const override { return spec_; }

 private:
  double upper() const { return w_.back(); }

  std::size_t segment_of(double w) const {
    std::size_t k = 0;
    while (k + 1 < slopes_.size() && w >= w_[k + 1]) ++k;
    return k;
  }

  Vec w_;
  Vec v_;
  Vec slopes_;
  OracleSpec spec_;
};

inline double softplus(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Transmission line with logarithmic loss
//   loss(w) = alpha * (log(1 + exp(beta w)) - log 2) - 2 w,
// gain h(w) = w - loss(w) on [0, capacity].
class OpfLineGain final : public GainFunction {
 public:
  OpfLineGain(double alpha, double beta, double capacity)
      : alpha_(alpha), beta_(beta), cap_(capacity) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(capacity > 0.0)) {
      throw InvalidEdgeError("transmission line needs alpha, beta, capacity > 0");
    }
  }

  double loss(double w) const {
    return alpha_ * (softplus(beta_ * w) - std::log(2.0)) - 2.0 * w;
  }

  double derivative(double w) const {
    return 3.0 - alpha_ * beta_ * logistic(beta_ * w);
  }

  double h(double w) const override {
    if (w < 0.0 || w > cap_) return -kInf;
    return w - loss(w);
  }
  double h_plus(double w) const override {
    if (w < 0.0) return kInf;
    if (w >= cap_) return -kInf;
    return derivative(w);
  }
  double h_minus(double w) const override {
    if (w <= 0.0) return kInf;
    if (w > cap_) return -kInf;
    return derivative(w);
  }
  double w_lo() const override { return 0.0; }
  double w_hi() const override { return cap_; }
  bool is_strictly_concave() const override { return true; }

  double w_max() const override {
    const double ab = alpha_ * beta_;
    if (ab <= 3.0) return cap_;
    const double p = 3.0 / ab;
    return std::min(cap_, std::log(p / (1.0 - p)) / beta_);
  }

  std::optional<double> closed_form_argmax(double eta1, double eta2) const override;

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double capacity() const { return cap_; }

  OracleSpec spec() const override {
    return {"opf_line", {{"alpha", alpha_}, {"beta", beta_}, {"capacity", cap_}}, {}};
  }

 private:
  double alpha_;
  double beta_;
  double cap_;
};

// Input w, output w*eta2/eta1 root of eta2 h'(w) = eta1, projected onto the
// capacity interval. Requires alpha * beta = 4.
inline double opf_arbitrage_input(double alpha, double beta, double capacity,
                                  double eta1, double eta2) {
  if (std::abs(alpha * beta - 4.0) > 1e-9) {
    throw InvalidEdgeError("closed-form line arbitrage requires alpha * beta = 4");
  }
  if (eta1 < 0.0 || eta2 < 0.0) throw InvalidEdgeError("prices must be nonnegative");
  if (eta1 == 0.0 && eta2 == 0.0) return 0.0;
  const double num = 3.0 * eta2 - eta1;
  if (num <= 0.0) return 0.0;
  const double w = std::log(num / (eta2 + eta1)) / beta;
  return std::clamp(w, 0.0, capacity);
}

inline std::optional<double> OpfLineGain::closed_form_argmax(double eta1,
                                                             double eta2) const {
  if (std::abs(alpha_ * beta_ - 4.0) > 1e-9) return std::nullopt;
  return opf_arbitrage_input(alpha_, beta_, cap_, eta1, eta2);
}

// User-supplied concave gain on [lo, hi]. Without a derivative the one-sided
// derivatives are difference quotients and scalar arbitrage falls back to
// golden-section search.
class CallableGain final : public GainFunction {
 public:
  using Fn = std::function<double(double)>;

  CallableGain(Fn h, Fn dh, double lo, double hi, bool strictly_concave)
      : h_(std::move(h)),
        dh_(std::move(dh)),
        lo_(lo),
        hi_(hi),
        strict_(strictly_concave) {}

  double h(double w) const override {
    if (w < lo_ || w > hi_) return -kInf;
    return h_(w);
  }
  double h_plus(double w) const override {
    if (w < lo_) return kInf;
    if (w >= hi_) return -kInf;
    if (dh_) return dh_(w);
    const double d = 1e-7 * std::max(1.0, std::abs(w));
    const double step = std::min(d, hi_ - w);
    return (h_(w + step) - h_(w)) / step;
  }
  double h_minus(double w) const override {
    if (w <= lo_) return kInf;
    if (w > hi_) return -kInf;
    if (dh_) return dh_(w);
    const double d = 1e-7 * std::max(1.0, std::abs(w));
    const double step = std::min(d, w - lo_);
    return (h_(w) - h_(w - step)) / step;
  }
  double w_lo() const override { return lo_; }
  double w_hi() const override { return hi_; }
  bool has_derivative() const override { return static_cast<bool>(dh_); }
  bool is_strictly_concave() const override { return strict_; }

  OracleSpec spec() const override { return {"callable", {}, {}}; }

 private:
  Fn h_;
  Fn dh_;
  double lo_;
  double hi_;
  bool strict_;
};

}  // namespace convexflows
