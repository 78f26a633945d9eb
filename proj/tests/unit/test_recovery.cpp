#include <gtest/gtest.h>

#include "helpers.hpp"
#include "validation/oracles.hpp"

using namespace cftest;

TEST(DetectAmbiguous, LosslessSegment) {
  const auto e = cf::lossless_edge(1.0);
  auto f = cf::detect_ambiguous(*e, cf::Vec{1.0, 1.0});
  ASSERT_EQ(f.generators.size(), 1u);
  EXPECT_EQ(f.base, (cf::Vec{0.0, 0.0}));
  EXPECT_EQ(f.generators[0], (cf::Vec{-1.0, 1.0}));
  f = cf::detect_ambiguous(*e, cf::Vec{2.0, 1.0});
  EXPECT_TRUE(f.is_point());
  EXPECT_EQ(f.base, (cf::Vec{0.0, 0.0}));
}

TEST(DetectAmbiguous, StrictlyConvexEdgesGiveAPoint) {
  const auto e = cf::opf_line_edge(16, 0.25, 2.0);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    EXPECT_TRUE(cf::detect_ambiguous(*e, random_vec(rng, 2, 0, 2)).is_point());
  }
  EXPECT_TRUE(cf::detect_ambiguous(*e, cf::Vec{1.0, 1.0}).is_point());
}

TEST(DetectAmbiguous, SegmentEndpointsShareTheValue) {
  const auto e = cf::piecewise_linear_edge({0, 1, 3}, {0, 0.9, 2.1});
  for (const cf::Vec& eta : {cf::Vec{0.9, 1.0}, cf::Vec{0.6, 1.0}, cf::Vec{1.8, 2.0}}) {
    const auto f = cf::detect_ambiguous(*e, eta);
    ASSERT_FALSE(f.is_point());
    const double v = e->evaluate(eta).value;
    cf::Vec end = f.base;
    for (std::size_t k = 0; k < end.size(); ++k) end[k] += f.generators[0][k];
    EXPECT_NEAR(cf::dot(eta, f.base), v, 1e-12 * (1 + std::abs(v)));
    EXPECT_NEAR(cf::dot(eta, end), v, 1e-12 * (1 + std::abs(v)));
  }
}

namespace {

cf::ProblemInstance parallel_pair() {
  std::vector<cf::Edge> edges{make_edge(cf::lossless_edge(1.0), {0, 1}),
                              make_edge(cf::lossless_edge(1.0), {0, 1})};
  return cf::ProblemInstance(2, edges, std::make_shared<cf::OpfQuadratic>(cf::Vec{0.0, 1.5}));
}

}  // namespace

TEST(RestorePrimal, ParallelTiedEdges) {
  const auto inst = parallel_pair();
  const cf::DualPoint mu{{1.0, 1.0}, {{1.0, 1.0}, {1.0, 1.0}}};
  const cf::RecoveryTarget target{{-1.5, 1.5}, {true, true}};
  const auto r = cf::restore_primal(inst, target, cf::optimal_faces(inst, mu), 1e-9);
  EXPECT_LE(r.residual, 1e-12);
  EXPECT_NEAR(r.t[0][0] + r.t[1][0], 1.5, 1e-12);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(inst.edge(i).oracle->is_member(r.flows[i], 1e-12));

  // Grid over (t1, t2): the best residual is zero, reached on t1 + t2 = 1.5.
  double best = cf::kInf;
  for (int a = 0; a <= 100; ++a) {
    for (int b = 0; b <= 100; ++b) {
      const double s = (a + b) / 100.0;
      best = std::min(best, std::sqrt(2.0) * std::abs(s - 1.5));
    }
  }
  EXPECT_NEAR(r.residual, best, 1e-12);
}

TEST(RestorePrimal, UnreachableTargetFails) {
  const auto inst = parallel_pair();
  const cf::DualPoint mu{{1.0, 1.0}, {{1.0, 1.0}, {1.0, 1.0}}};
  const cf::RecoveryTarget target{{-3.0, 3.0}, {true, true}};
  EXPECT_THROW(cf::restore_primal(inst, target, cf::optimal_faces(inst, mu), 1e-6),
               cf::RecoveryError);
  const auto r = cf::restore_primal_best_effort(inst, target, cf::optimal_faces(inst, mu));
  EXPECT_NEAR(r.residual, std::sqrt(2.0), 1e-9);
}

TEST(RestorePrimal, NoAmbiguityLeavesFlowsAlone) {
  const auto inst = parallel_pair();
  const cf::DualPoint mu{{2.0, 1.0}, {{2.0, 1.0}, {2.0, 1.0}}};
  const auto faces = cf::optimal_faces(inst, mu);
  const cf::RecoveryTarget target{{-0.5, 0.5}, {true, true}};
  const auto r = cf::restore_primal_best_effort(inst, target, faces);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(r.flows[i], faces[i].base);
  EXPECT_NEAR(r.residual, std::sqrt(0.5), 1e-12);
}

TEST(RestorePrimal, MaskedCoordinatesAreFree) {
  const auto inst = parallel_pair();
  const cf::DualPoint mu{{1.0, 1.0}, {{1.0, 1.0}, {1.0, 1.0}}};
  const cf::RecoveryTarget target{{0.0, 1.5}, {false, true}};
  const auto r = cf::restore_primal(inst, target, cf::optimal_faces(inst, mu), 1e-9);
  EXPECT_NEAR(r.net_flow[1], 1.5, 1e-12);
  EXPECT_NEAR(r.net_flow[0], -1.5, 1e-12);
}

TEST(RestorePrimal, MaxFlowConservesInteriorNodes) {
  for (const char* name : {"maxflow_path.json", "maxflow_small.json", "parallel_ties.json",
                           "maxflow_diamond.json"}) {
    const auto inst = fixture(name);
    const auto r = cf::solve(inst, quiet_config());
    ASSERT_TRUE(r.solved) << name;
    const cf::Vec& y = r.primal.net_flow;
    for (std::size_t j = 1; j + 1 < y.size(); ++j) EXPECT_NEAR(y[j], 0.0, 1e-9) << name;
    EXPECT_NEAR(y.back(), cfval::maxflow_oracle(inst), 1e-9) << name;
    for (std::size_t i = 0; i < inst.num_edges(); ++i) {
      EXPECT_TRUE(inst.edge(i).oracle->is_member(r.primal.edge_flows[i], 1e-9)) << name;
    }
  }
}

TEST(RestorePrimal, StrongDualityAfterRecovery) {
  for (const char* name : {"maxflow_small.json", "parallel_ties.json", "fisher_3x3.json",
                           "fisher_4x4.json"}) {
    const auto inst = fixture(name);
    const auto r = cf::solve(inst, quiet_config());
    EXPECT_TRUE(r.recovery_used) << name;
    EXPECT_TRUE(r.recovered) << name;
    EXPECT_LE(std::abs(r.relative_gap), 1e-7) << name;
  }
}

TEST(RestorePrimal, IdentityForStrictlyConvexProblems) {
  const auto inst = cf::gen_opf(15, 6);
  auto cfg = quiet_config();
  cfg.grad_tol = 1e-9;
  const auto r = cf::solve(inst, cfg);
  EXPECT_FALSE(r.recovery_used);
  const auto at = cf::eval_transformed(inst, r.dual.nu, nullptr);
  for (std::size_t i = 0; i < inst.num_edges(); ++i) EXPECT_EQ(r.primal.edge_flows[i], at.edges[i].x);
}
