#pragma once

// Primal restoration for edges whose arbitrage problem has a face of
// maximizers rather than a single point. Each face is base + sum_k t_k g_k
// with t in [0,1]^k; we pick t to make the routed net flow match the target
// of the net-flow objective,
//
//   minimize || mask .* (target - sum_i A_i x_i(t)) ||_2^2   over t in [0,1]^K,
//
// by alternating projected-gradient steps and conjugate gradients on the
// face of free variables.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "convexflows/common.hpp"
#include "convexflows/core.hpp"
#include "convexflows/dual.hpp"
#include "convexflows/oracle.hpp"

namespace convexflows {

inline constexpr double kSlopeMatchTol = 1e-6;

// Strictly convex edges always give a single point.
inline Face detect_ambiguous(const EdgeOracle& edge, std::span<const double> eta,
                             double tol = kSlopeMatchTol) {
  if (edge.is_strictly_convex()) return Face{edge.evaluate(eta).x, {}};
  return edge.optimal_face(eta, tol);
}

struct RecoveryResult {
  std::vector<Vec> flows;
  Vec net_flow;
  double residual = 0.0;  // masked l2 norm
  std::vector<Vec> t;     // face coefficients per edge
  int iterations = 0;
};

namespace detail {

// Column of the least-squares matrix: sparse (row, value) pairs.
using SparseColumn = std::vector<std::pair<std::size_t, double>>;

// One pass: freeze variables pinned at a bound by the gradient, then run
// conjugate gradients on the rest until a bound is hit. Returns false when
// the projected gradient is already below `stop`.
inline bool box_lsq_pass(const std::vector<SparseColumn>& cols, Vec& r, Vec& t,
                         double stop) {
  const std::size_t K = cols.size();
  auto at_r = [&](const SparseColumn& c) {
    double s = 0.0;
    for (auto [row, v] : c) s += v * r[row];
    return s;
  };
  // s = M^T r is the descent direction of (1/2)|r|^2.
  Vec s(K), p(K), q(r.size());
  std::vector<char> free(K);
  double pg = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    s[k] = at_r(cols[k]);
    const bool pinned = (t[k] <= 0.0 && s[k] < 0.0) || (t[k] >= 1.0 && s[k] > 0.0);
    free[k] = !pinned;
    if (!pinned) pg = std::max(pg, std::abs(s[k]));
  }
  if (pg <= stop) return false;

  for (std::size_t k = 0; k < K; ++k) p[k] = free[k] ? s[k] : 0.0;
  double gamma = dot(p, p);
  for (std::size_t inner = 0; inner <= K; ++inner) {
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (p[k] == 0.0) continue;
      for (auto [row, v] : cols[k]) q[row] += v * p[k];
    }
    const double qq = dot(q, q);
    if (!(qq > 0.0)) break;
    double alpha = gamma / qq;
    double alpha_max = kInf;
    for (std::size_t k = 0; k < K; ++k) {
      if (p[k] > 0.0) alpha_max = std::min(alpha_max, (1.0 - t[k]) / p[k]);
      if (p[k] < 0.0) alpha_max = std::min(alpha_max, -t[k] / p[k]);
    }
    const bool hit = alpha >= alpha_max;
    if (hit) alpha = alpha_max;
    for (std::size_t k = 0; k < K; ++k) t[k] = std::clamp(t[k] + alpha * p[k], 0.0, 1.0);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= alpha * q[j];
    if (hit) break;
    double gnew = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      s[k] = free[k] ? at_r(cols[k]) : 0.0;
      gnew += s[k] * s[k];
    }
    if (std::sqrt(gnew) <= stop) break;
    for (std::size_t k = 0; k < K; ++k) p[k] = s[k] + (gnew / gamma) * p[k];
    gamma = gnew;
  }
  return true;
}

}  // namespace detail

// Least-squares restoration without the residual check.
inline RecoveryResult restore_primal_best_effort(const ProblemInstance& inst,
                                                 const RecoveryTarget& target,
                                                 const std::vector<Face>& faces) {
  const std::size_t n = inst.num_nodes();
  const std::size_t m = inst.num_edges();
  if (faces.size() != m || target.target.size() != n || target.mask.size() != n) {
    throw DimensionError("recovery inputs do not match instance");
  }
  std::vector<detail::SparseColumn> cols;
  std::vector<std::pair<std::size_t, std::size_t>> owner;
  Vec base_routed(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const EdgeIncidence& inc = inst.edge(i).incidence;
    scatter_add(faces[i].base, inc, base_routed);
    for (std::size_t k = 0; k < faces[i].generators.size(); ++k) {
      const Vec& g = faces[i].generators[k];
      detail::SparseColumn c;
      for (std::size_t l = 0; l < g.size(); ++l) {
        if (g[l] != 0.0 && target.mask[inc[l]]) c.emplace_back(inc[l], g[l]);
      }
      cols.push_back(std::move(c));
      owner.emplace_back(i, k);
    }
  }

  auto residual_of = [&](const Vec& t) {
    Vec r(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (target.mask[j]) r[j] = target.target[j] - base_routed[j];
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      for (auto [row, v] : cols[c]) r[row] -= v * t[c];
    }
    return r;
  };

  Vec t(cols.size(), 0.0);
  Vec r = residual_of(t);
  double col_scale = 0.0;
  for (const auto& c : cols) {
    for (auto [row, v] : c) col_scale = std::max(col_scale, std::abs(v));
  }
  const double stop = 1e-13 * std::max(1.0, col_scale) * (1.0 + norm_inf(target.target));
  RecoveryResult out;
  const int max_pass = 20 * static_cast<int>(cols.size() + 1);
  while (out.iterations < max_pass && detail::box_lsq_pass(cols, r, t, stop)) {
    // Recompute from t so clamping never lets r drift from the iterate.
    r = residual_of(t);
    ++out.iterations;
  }

  out.flows.resize(m);
  out.t.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.flows[i] = faces[i].base;
    out.t[i].assign(faces[i].generators.size(), 0.0);
  }
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto [i, k] = owner[c];
    out.t[i][k] = t[c];
    const Vec& g = faces[i].generators[k];
    for (std::size_t l = 0; l < g.size(); ++l) out.flows[i][l] += t[c] * g[l];
  }
  out.net_flow = assemble_net_flow(inst, out.flows);
  out.residual = norm2(r);
  return out;
}

// Restores flows given one face per edge and the objective's target; fails
// when the residual exceeds tol * (1 + |target|_inf).
inline RecoveryResult restore_primal(const ProblemInstance& inst, const RecoveryTarget& target,
                                     const std::vector<Face>& faces, double tol) {
  RecoveryResult out = restore_primal_best_effort(inst, target, faces);
  if (out.residual > tol * (1.0 + norm_inf(target.target))) {
    throw RecoveryError("primal recovery left residual " + std::to_string(out.residual),
                        out.residual);
  }
  return out;
}

inline std::vector<Face> optimal_faces(const ProblemInstance& inst, const DualPoint& mu,
                                       double slope_tol = kSlopeMatchTol) {
  std::vector<Face> faces;
  faces.reserve(inst.num_edges());
  for (std::size_t i = 0; i < inst.num_edges(); ++i) {
    faces.push_back(detect_ambiguous(*inst.edge(i).oracle, mu.eta[i], slope_tol));
  }
  return faces;
}

// Faces and target taken from a dual point.
inline RecoveryResult restore_primal(const ProblemInstance& inst, const DualPoint& mu,
                                     double tol, double slope_tol = kSlopeMatchTol) {
  const std::vector<Face> faces = optimal_faces(inst, mu, slope_tol);
  const ConjEval at = inst.objective().conj(mu.nu);
  return restore_primal(inst, inst.objective().recovery_target(mu.nu, at), faces, tol);
}

// Refinement of a nonsmooth reduced dual (no edge utilities). Quasi-Newton
// iterates creep along the kinks where ties between edge prices hold. Fixing
// the tie pattern seen at nu (within slope_tol), the optimum satisfies
//   eta_i^T g = 0                         for every face generator g,
//   sum_i A_i (base_i + G_i t) = target(nu) on the recovery mask,
// a square system in (free nu, t) solved here by Levenberg-Marquardt.
// Returns the refined prices when the system is solved with t in [0, 1].
inline std::optional<Vec> polish_on_faces(const ProblemInstance& inst, const Vec& nu0,
                                          double slope_tol, int max_iter = 100) {
  const std::size_t n = inst.num_nodes();
  const std::size_t m = inst.num_edges();
  if (!inst.zero_edge_utilities() || nu0.size() != n) return std::nullopt;
  const ConjugateOracle& obj = inst.objective();

  std::vector<Face> faces;
  struct Gen {
    std::size_t edge;
    const Vec* g;
  };
  std::vector<Gen> gens;
  for (std::size_t i = 0; i < m; ++i) {
    faces.push_back(
        detect_ambiguous(*inst.edge(i).oracle, scatter_prices(nu0, inst.edge(i).incidence),
                         slope_tol));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (const Vec& g : faces[i].generators) gens.push_back({i, &g});
  }
  const std::size_t K = gens.size();
  if (K == 0) return std::nullopt;

  std::vector<bool> fixed(n, false);
  for (const FixedCoordinate& f : obj.fixed_coordinates()) fixed[f.index] = true;
  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < n; ++j) {
    if (!fixed[j]) free.push_back(j);
  }
  const std::size_t F = free.size();
  const std::size_t N = F + K;
  if (N > 400) return std::nullopt;

  Vec base_routed(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    scatter_add(faces[i].base, inst.edge(i).incidence, base_routed);
  }
  auto unpack = [&](const Vec& z) {
    Vec nu(nu0);
    for (std::size_t k = 0; k < F; ++k) nu[free[k]] = z[k];
    return nu;
  };
  // Residual: K tie rows, then n balance rows (zero where unmasked).
  std::vector<bool> mask;
  auto residual = [&](const Vec& z, Vec& r) {
    const Vec nu = unpack(z);
    for (double v : nu) {
      if (v < 0.0) return false;
    }
    const ConjEval at = obj.conj(nu);
    if (!std::isfinite(at.value)) return false;
    const RecoveryTarget tgt = obj.recovery_target(nu, at);
    mask = tgt.mask;
    r.assign(K + n, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const EdgeIncidence& inc = inst.edge(gens[k].edge).incidence;
      const Vec& g = *gens[k].g;
      double s = 0.0;
      for (std::size_t l = 0; l < g.size(); ++l) s += nu[inc[l]] * g[l];
      r[k] = s / norm2(g);
    }
    Vec routed = base_routed;
    for (std::size_t k = 0; k < K; ++k) {
      const EdgeIncidence& inc = inst.edge(gens[k].edge).incidence;
      const Vec& g = *gens[k].g;
      for (std::size_t l = 0; l < g.size(); ++l) routed[inc[l]] += z[F + k] * g[l];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (tgt.mask[j]) r[K + j] = routed[j] - tgt.target[j];
    }
    return true;
  };

  // Start t at the least-squares point for the current prices.
  Vec z(N, 0.0);
  for (std::size_t k = 0; k < F; ++k) z[k] = nu0[free[k]];
  {
    const ConjEval at = obj.conj(nu0);
    if (!std::isfinite(at.value)) return std::nullopt;
    const RecoveryResult rr =
        restore_primal_best_effort(inst, obj.recovery_target(nu0, at), faces);
    std::size_t c = 0;
    for (std::size_t i = 0; i < m; ++i) {
      for (double t : rr.t[i]) z[F + c++] = t;
    }
  }

  Vec r, rt;
  if (!residual(z, r)) return std::nullopt;
  std::vector<bool> mask_at_z = mask;
  const std::size_t M = r.size();
  double lambda = 1e-6;
  const double scale = 1.0 + norm_inf(nu0);
  for (int it = 0; it < max_iter && norm_inf(r) > 1e-13 * scale; ++it) {
    // Jacobian: forward differences in nu, exact in t.
    std::vector<Vec> J(N, Vec(M, 0.0));
    for (std::size_t k = 0; k < F; ++k) {
      Vec zp = z;
      const double h = 1e-7 * (1.0 + std::abs(z[k]));
      zp[k] += h;
      if (!residual(zp, rt)) {
        zp[k] = z[k] - h;
        if (!residual(zp, rt)) return std::nullopt;
        for (std::size_t q = 0; q < M; ++q) J[k][q] = (r[q] - rt[q]) / h;
      } else {
        for (std::size_t q = 0; q < M; ++q) J[k][q] = (rt[q] - r[q]) / h;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      const EdgeIncidence& inc = inst.edge(gens[k].edge).incidence;
      const Vec& g = *gens[k].g;
      for (std::size_t l = 0; l < g.size(); ++l) {
        if (mask_at_z[inc[l]]) J[F + k][K + inc[l]] += g[l];
      }
    }
    std::vector<Vec> H(N, Vec(N, 0.0));
    Vec grad(N, 0.0);
    for (std::size_t a = 0; a < N; ++a) {
      grad[a] = dot(J[a], r);
      for (std::size_t b = 0; b <= a; ++b) H[a][b] = H[b][a] = dot(J[a], J[b]);
    }
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      // Cholesky of H + lambda (diag(H) + 1e-12).
      std::vector<Vec> L(N, Vec(N, 0.0));
      bool pd = true;
      for (std::size_t a = 0; a < N && pd; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
          double v = H[a][b];
          if (a == b) v += lambda * (H[a][a] + 1e-12);
          for (std::size_t c = 0; c < b; ++c) v -= L[a][c] * L[b][c];
          if (a == b) {
            if (!(v > 0.0)) {
              pd = false;
              break;
            }
            L[a][a] = std::sqrt(v);
          } else {
            L[a][b] = v / L[b][b];
          }
        }
      }
      if (!pd) {
        lambda *= 10.0;
        continue;
      }
      Vec step(N);
      for (std::size_t a = 0; a < N; ++a) {
        double v = -grad[a];
        for (std::size_t c = 0; c < a; ++c) v -= L[a][c] * step[c];
        step[a] = v / L[a][a];
      }
      for (std::size_t a = N; a-- > 0;) {
        double v = step[a];
        for (std::size_t c = a + 1; c < N; ++c) v -= L[c][a] * step[c];
        step[a] = v / L[a][a];
      }
      Vec zn(N);
      for (std::size_t a = 0; a < N; ++a) zn[a] = z[a] + step[a];
      if (residual(zn, rt) && norm2(rt) < norm2(r)) {
        z = std::move(zn);
        r = rt;
        mask_at_z = mask;
        lambda = std::max(1e-12, lambda * 0.1);
        improved = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  if (norm_inf(r) > 1e-10 * scale) return std::nullopt;
  for (std::size_t k = 0; k < K; ++k) {
    if (z[F + k] < -1e-9 || z[F + k] > 1.0 + 1e-9) return std::nullopt;
  }
  return unpack(z);
}

}  // namespace convexflows
