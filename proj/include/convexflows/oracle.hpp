#pragma once

// Evaluation interfaces shared by the solver and the bundled oracles.
//
// An edge is described only through its arbitrage oracle: the support
// function f(eta) = sup { eta^T x : x in T } of its allowable-flow set T, a
// maximizer, and a membership test. The net-flow utility U and the edge
// utilities V are described through conjugate oracles
// conj(nu) = sup_y (U(y) - nu^T y). Nothing in the solver inspects the sets
// or utilities directly, so user-defined edges plug in by implementing these.

#include <cstddef>
#include <span>
#include <vector>

#include "convexflows/common.hpp"

namespace convexflows {

struct EvalOptions {
  // No-flow and active-interval checks that skip the scalar solve.
  bool use_shortcuts = true;
};

struct EdgeEval {
  double value = 0.0;
  Vec x;
  // False when eta lies on a kink of f (several maximizers exist).
  bool unique = true;
  // False when the supremum is finite but not achieved (x is then only the
  // limiting direction and must not be used as a flow).
  bool attained = true;
};

// Maximizer set described as base + sum_k t_k * generators[k], t in [0,1]^k.
// A single point has no generators; a two-node segment has one.
struct Face {
  Vec base;
  std::vector<Vec> generators;

  bool is_point() const { return generators.empty(); }
};

class EdgeOracle {
 public:
  virtual ~EdgeOracle() = default;

  virtual std::size_t dimension() const = 0;
  virtual EdgeEval evaluate(std::span<const double> eta,
                            const EvalOptions& opts = {}) const = 0;
  virtual bool is_member(std::span<const double> x, double tol) const = 0;
  virtual bool is_strictly_convex() const = 0;

  // Set of maximizers at eta. Edges with strictly convex sets return the
  // unique maximizer; polyhedral edges override this.
  virtual Face optimal_face(std::span<const double> eta, double /*tol*/) const {
    return Face{evaluate(eta).x, {}};
  }

  virtual OracleSpec spec() const = 0;
};

struct ConjEval {
  double value = 0.0;
  Vec maximizer;
  // False when the sup is achieved on a set; maximizer is then a
  // representative (often 0) and must not be trusted as a net flow.
  bool unique = true;
};

struct FixedCoordinate {
  std::size_t index;
  double value;
};

// Target for primal recovery: coordinates with mask[j] == false are free.
struct RecoveryTarget {
  Vec target;
  std::vector<bool> mask;
};

class ConjugateOracle {
 public:
  virtual ~ConjugateOracle() = default;

  virtual std::size_t dimension() const = 0;

  // sup_y (U(y) - nu^T y); +inf outside the domain, never a large float.
  virtual ConjEval conj(std::span<const double> nu) const = 0;

  // U(y), or -inf when an indicator constraint is violated by more than
  // tol * (1 + |y|_inf).
  virtual double evaluate_primal(std::span<const double> y,
                                 double tol = 0.0) const = 0;

  // Box part of the conjugate's domain. Always >= 0 (nondecreasing U).
  virtual Vec lower_bounds() const { return Vec(dimension(), 0.0); }

  // Coordinates pinned by the domain (translation invariance etc.).
  virtual std::vector<FixedCoordinate> fixed_coordinates() const { return {}; }

  virtual Vec default_start() const { return Vec(dimension(), 1.0); }

  // Infinity-norm distance of y from the implicit constraints of U.
  virtual double domain_violation(std::span<const double> /*y*/) const {
    return 0.0;
  }

  virtual RecoveryTarget recovery_target(std::span<const double> /*nu*/,
                                         const ConjEval& at_nu) const {
    return RecoveryTarget{at_nu.maximizer,
                          std::vector<bool>(at_nu.maximizer.size(), at_nu.unique)};
  }

  // True when the dual restricted to {0,1}-valued prices is a cut function,
  // so threshold rounding of nu cannot increase the dual value.
  virtual bool integral_cut_structure() const { return false; }

  virtual OracleSpec spec() const = 0;
};

}  // namespace convexflows
