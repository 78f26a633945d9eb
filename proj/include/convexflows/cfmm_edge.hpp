#pragma once

// Constant-function market makers with weighted geometric-mean trading
// function phi(R) = prod_j R_j^{w_j}. A trade tenders Delta >= 0 and
// receives Lambda >= 0; it is valid if phi(R + gamma Delta - Lambda) >= phi(R).
// The edge flow is x = Lambda - Delta.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <utility>

#include "convexflows/common.hpp"
#include "convexflows/oracle.hpp"

namespace convexflows {

struct CfmmTrade {
  Vec x;
  double value = 0.0;
  bool attained = true;
};

namespace detail {

inline void check_pool(std::span<const double> R, double gamma) {
  for (double r : R) {
    if (!(r > 0.0) || !std::isfinite(r)) throw InvalidEdgeError("reserves must be positive");
  }
  if (!(gamma > 0.0) || gamma > 1.0) throw InvalidEdgeError("fee must lie in (0, 1]");
}

// Some price is zero but not all: an unlimited amount of the free asset can
// be tendered, so every priced reserve can be drained in the limit.
inline CfmmTrade unattained_drain(std::span<const double> R, std::span<const double> eta) {
  CfmmTrade t;
  t.x.assign(R.size(), 0.0);
  for (std::size_t j = 0; j < R.size(); ++j) {
    if (eta[j] > 0.0) {
      t.x[j] = R[j];
      t.value += eta[j] * R[j];
    }
  }
  t.attained = false;
  return t;
}

}  // namespace detail

// Two-asset pool with phi = R1^w R2^(1-w). With w = 1/2 this is Uniswap.
inline CfmmTrade uniswap_arbitrage(std::span<const double> R, double gamma, double w,
                                   std::span<const double> eta) {
  if (R.size() != 2 || eta.size() != 2) throw DimensionError("two-asset pool expected");
  detail::check_pool(R, gamma);
  if (!(w > 0.0 && w < 1.0)) throw InvalidEdgeError("pool weight must lie in (0, 1)");
  if (!(eta[0] >= 0.0) || !(eta[1] >= 0.0)) {
    throw InvalidEdgeError("prices must be nonnegative");
  }
  CfmmTrade t{Vec{0.0, 0.0}, 0.0, true};
  if (eta[0] == 0.0 && eta[1] == 0.0) return t;
  if (eta[0] == 0.0 || eta[1] == 0.0) return detail::unattained_drain(R, eta);

  // Tender asset i, receive asset o; a = w_i / w_o.
  auto direction = [&](std::size_t i, std::size_t o, double a) {
    const double target = std::pow(eta[o] * gamma * a * R[o] * std::pow(R[i], a) / eta[i],
                                   1.0 / (a + 1.0));
    const double delta = std::max(0.0, target - R[i]) / gamma;
    Vec x(2, 0.0);
    if (delta > 0.0) {
      const double lambda = R[o] - R[o] * std::pow(R[i] / (R[i] + gamma * delta), a);
      x[i] = -delta;
      x[o] = lambda;
    }
    return x;
  };
  Vec x1 = direction(0, 1, w / (1.0 - w));
  Vec x2 = direction(1, 0, (1.0 - w) / w);
  const double v1 = dot(eta, x1);
  const double v2 = dot(eta, x2);
  if (v1 >= v2) {
    t.x = std::move(x1);
    t.value = v1;
  } else {
    t.x = std::move(x2);
    t.value = v2;
  }
  if (t.value <= 0.0) {
    t.x = Vec{0.0, 0.0};
    t.value = 0.0;
  }
  return t;
}

// General n-asset pool via the scalar dual over the invariant multiplier
// lambda. For fixed lambda each post-trade reserve is
//   r_j = lambda w_j / eta_j          if that is below R_j   (asset received)
//   r_j = lambda w_j gamma / eta_j    if that is above R_j   (asset tendered)
//   r_j = R_j                         otherwise,
// and lambda is chosen so that sum_j w_j log r_j = sum_j w_j log R_j.
inline CfmmTrade separable_cfmm_arbitrage(std::span<const double> w,
                                          std::span<const double> R, double gamma,
                                          std::span<const double> eta) {
  const std::size_t n = R.size();
  if (n < 2 || w.size() != n || eta.size() != n) {
    throw DimensionError("pool weights, reserves and prices must share length >= 2");
  }
  detail::check_pool(R, gamma);
  double wsum = 0.0;
  for (double wj : w) {
    if (!(wj > 0.0)) throw InvalidEdgeError("pool weights must be positive");
    wsum += wj;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw InvalidEdgeError("pool weights must sum to 1");
  for (double e : eta) {
    if (!(e >= 0.0)) throw InvalidEdgeError("prices must be nonnegative");
  }
  const std::size_t zeros = std::count(eta.begin(), eta.end(), 0.0);
  if (zeros == n) return CfmmTrade{Vec(n, 0.0), 0.0, true};
  if (zeros > 0) return detail::unattained_drain(R, eta);

  auto reserve = [&](std::size_t j, double lambda) {
    const double recv = lambda * w[j] / eta[j];
    if (recv < R[j]) return recv;
    const double tend = recv * gamma;
    if (tend > R[j]) return tend;
    return R[j];
  };
  // Termwise differences so untouched reserves contribute exactly zero.
  auto residual = [&](double lambda) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = reserve(j, lambda);
      if (r != R[j]) s += w[j] * (std::log(r) - std::log(R[j]));
    }
    return s;
  };

  Vec bps;
  bps.reserve(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    bps.push_back(eta[j] * R[j] / w[j]);
    bps.push_back(eta[j] * R[j] / (w[j] * gamma));
  }
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());

  // Residual is nondecreasing in lambda; locate the piece containing its root.
  std::size_t k = 0;
  {
    std::size_t lo = 0;
    std::size_t hi = bps.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (residual(bps[mid]) >= 0.0) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    k = lo;
  }
  double lambda;
  if (k < bps.size() && residual(bps[k]) == 0.0) {
    lambda = bps[k];
  } else {
    // On the open piece the residual is W log(lambda) + C.
    const double left = k == 0 ? 0.0 : bps[k - 1];
    const double right = k == bps.size() ? kInf : bps[k];
    const double probe = k == 0 ? 0.5 * right
                         : k == bps.size() ? 2.0 * left
                                           : 0.5 * (left + right);
    double W = 0.0;
    double C = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = reserve(j, probe);
      if (r != R[j]) {
        W += w[j];
        C += w[j] * (std::log(r / probe) - std::log(R[j]));
      }
    }
    lambda = W > 0.0 ? std::exp(-C / W) : probe;
    lambda = std::clamp(lambda, left, right);
  }

  CfmmTrade t{Vec(n, 0.0), 0.0, true};
  for (std::size_t j = 0; j < n; ++j) {
    const double r = reserve(j, lambda);
    t.x[j] = r < R[j] ? R[j] - r : -(r - R[j]) / gamma;
  }
  t.value = dot(eta, t.x);
  if (t.value <= 0.0) {
    std::fill(t.x.begin(), t.x.end(), 0.0);
    t.value = 0.0;
  }
  return t;
}

class GeometricMeanPool final : public EdgeOracle {
 public:
  GeometricMeanPool(Vec reserves, Vec weights, double fee = 1.0)
      : R_(std::move(reserves)), w_(std::move(weights)), gamma_(fee) {
    if (R_.size() < 2 || w_.size() != R_.size()) {
      throw InvalidEdgeError("pool needs >= 2 assets with one weight each");
    }
    detail::check_pool(R_, gamma_);
    double s = 0.0;
    for (double wj : w_) {
      if (!(wj > 0.0)) throw InvalidEdgeError("pool weights must be positive");
      s += wj;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidEdgeError("pool weights must sum to 1");
  }

  static std::shared_ptr<GeometricMeanPool> uniform(Vec reserves, double fee = 1.0) {
    Vec w(reserves.size(), 1.0 / static_cast<double>(reserves.size()));
    return std::make_shared<GeometricMeanPool>(std::move(reserves), std::move(w), fee);
  }

  const Vec& reserves() const { return R_; }
  const Vec& weights() const { return w_; }
  double fee() const { return gamma_; }

  std::size_t dimension() const override { return R_.size(); }

  EdgeEval evaluate(std::span<const double> eta, const EvalOptions& = {}) const override {
    for (double e : eta) {
      if (e < 0.0) return EdgeEval{kInf, Vec(R_.size(), 0.0), false, false};
    }
    CfmmTrade t = R_.size() == 2 ? uniswap_arbitrage(R_, gamma_, w_[0], eta)
                                 : separable_cfmm_arbitrage(w_, R_, gamma_, eta);
    EdgeEval out;
    out.value = t.value;
    out.x = std::move(t.x);
    out.attained = t.attained;
    out.unique = t.attained && std::all_of(eta.begin(), eta.end(),
                                           [](double e) { return e > 0.0; });
    return out;
  }

  // Post-trade invariant within tol * (1 + |x|_inf) in reserve units.
  bool is_member(std::span<const double> x, double tol) const override {
    const double slack = tol * (1.0 + norm_inf(x));
    double logphi = 0.0;
    double lognew = 0.0;
    for (std::size_t j = 0; j < R_.size(); ++j) {
      const double r = x[j] < 0.0 ? R_[j] - gamma_ * x[j] : R_[j] - x[j];
      if (r <= 0.0) return false;
      logphi += w_[j] * std::log(R_[j]);
      lognew += w_[j] * std::log(r);
    }
    return std::exp(logphi) - std::exp(lognew) <= slack;
  }

  bool is_strictly_convex() const override { return true; }

  OracleSpec spec() const override {
    return {"cfmm_geomean", {{"fee", gamma_}}, {{"reserves", R_}, {"weights", w_}}};
  }

 private:
  Vec R_;
  Vec w_;
  double gamma_;
};

}  // namespace convexflows
