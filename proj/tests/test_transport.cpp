#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "unisae/error.hpp"
#include "unisae/transport.hpp"

namespace unisae {
namespace {

constexpr double kE = 2.718281828459045;

void expect_factorization(const Matrix& cost, const TransportPlan& tp) {
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j) {
      const double expected = std::exp(tp.log_u[i] - cost(i, j) / tp.epsilon + tp.log_v[j]);
      ASSERT_NEAR(tp.plan(i, j), expected, 1e-12) << i << "," << j;
    }
}

TEST(CostMatrix, CosineExamples) {
  const Matrix za = [] {
    Matrix m(3, 2);
    m(0, 0) = 1;
    m(1, 1) = 2;
    return m;  // row 2 is zero
  }();
  Matrix zb(3, 2);
  zb(0, 0) = 3;
  zb(1, 0) = -1;
  zb(2, 1) = 1;
  const Matrix c = cost_matrix(za, zb);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(c(0, 1), 2.0, 1e-15);
  EXPECT_NEAR(c(0, 2), 1.0, 1e-15);
  EXPECT_NEAR(c(1, 2), 0.0, 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c(2, j), 1.0);
  EXPECT_THROW(cost_matrix(Matrix(2, 3), Matrix(2, 2)), DimensionError);
}

TEST(Sinkhorn, ZeroCostGivesIndependentCoupling) {
  const Vector r{0.5, 0.5};
  const TransportPlan tp = sinkhorn(Matrix(2, 2), r, r, {});
  for (double x : tp.plan.flat()) EXPECT_NEAR(x, 0.25, 1e-12);
  EXPECT_TRUE(tp.converged);
}

TEST(Sinkhorn, SymmetricTwoByTwoClosedForm) {
  Matrix c(2, 2);
  c(0, 1) = c(1, 0) = 1.0;
  const Vector r{0.5, 0.5};
  SinkhornOptions opt;
  opt.epsilon = 1.0;
  opt.tol = 1e-12;
  const TransportPlan tp = sinkhorn(c, r, r, opt);
  // Symmetric scaling t: t^2 (1 + e^-1) = 0.5.
  const double t2 = 0.5 / (1.0 + 1.0 / kE);
  EXPECT_NEAR(tp.plan(0, 0), t2, 1e-10);
  EXPECT_NEAR(tp.plan(0, 1), t2 / kE, 1e-10);
  EXPECT_NEAR(tp.plan(0, 0), 0.36552, 1e-4);
  EXPECT_NEAR(tp.plan(1, 0), 0.13448, 1e-4);
  expect_factorization(c, tp);
}

TEST(Sinkhorn, RejectsBadInputs) {
  const Matrix c(2, 2);
  EXPECT_THROW(sinkhorn(c, Vector{1.0, 0.0}, Vector{0.5, 0.5}, {}), InvalidArgument);
  EXPECT_THROW(sinkhorn(c, Vector{0.6, 0.6}, Vector{0.5, 0.5}, {}), InvalidArgument);
  EXPECT_THROW(sinkhorn(c, Vector{0.5, 0.5}, Vector{1.0}, {}), DimensionError);
  SinkhornOptions bad;
  bad.epsilon = 0.0;
  EXPECT_THROW(sinkhorn(c, Vector{0.5, 0.5}, Vector{0.5, 0.5}, bad), InvalidArgument);
  Matrix nan(2, 2);
  nan(0, 0) = std::nan("");
  EXPECT_THROW(sinkhorn(nan, Vector{0.5, 0.5}, Vector{0.5, 0.5}, {}), NumericalError);
}

TEST(Sinkhorn, RandomPlansFactorizeAndMeetMarginals) {
  std::mt19937_64 rng(7);
  for (const double eps : {1.0, 0.1, 0.03, 0.01}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix c = oracle::random_matrix(7, 5, rng, 0.0, 2.0);
      const Vector r = oracle::random_simplex(7, rng), col = oracle::random_simplex(5, rng);
      SinkhornOptions opt;
      opt.epsilon = eps;
      opt.max_iters = 20000;
      const TransportPlan tp = sinkhorn(c, r, col, opt);
      ASSERT_TRUE(tp.converged) << "eps " << eps;
      EXPECT_EQ(tp.log_domain, eps < 0.05);
      expect_factorization(c, tp);
      double err = 0.0;
      for (std::size_t i = 0; i < 7; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
          ASSERT_GE(tp.plan(i, j), 0.0);
          s += tp.plan(i, j);
        }
        err = std::max(err, std::abs(s - r[i]));
      }
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 7; ++i) s += tp.plan(i, j);
        err = std::max(err, std::abs(s - col[j]));
      }
      EXPECT_LE(err, 1e-6);
      EXPECT_LE(tp.marginal_err, opt.tol);
    }
  }
}

TEST(Sinkhorn, MatchesDualLogDomainOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix c = oracle::random_matrix(4, 6, rng, 0.0, 2.0);
    const Vector r = oracle::random_simplex(4, rng), col = oracle::random_simplex(6, rng);
    SinkhornOptions opt;
    opt.epsilon = 0.2;
    opt.tol = 1e-12;
    opt.max_iters = 100000;
    const Matrix ours = sinkhorn(c, r, col, opt).plan;
    const Matrix ref = oracle::log_sinkhorn(c, r, col, 0.2);
    for (std::size_t k = 0; k < ours.size(); ++k) EXPECT_NEAR(ours.flat()[k], ref.flat()[k], 1e-9);
  }
}

TEST(Sinkhorn, ThreeByThreeBeatsRandomFeasiblePlans) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix c = oracle::random_matrix(3, 3, rng, 0.0, 2.0);
    const Vector r = oracle::random_simplex(3, rng), col = oracle::random_simplex(3, rng);
    SinkhornOptions opt;
    opt.epsilon = 0.1;
    opt.tol = 1e-13;
    opt.max_iters = 100000;
    const Matrix plan = sinkhorn(c, r, col, opt).plan;
    const double ours = oracle::entropic_objective(c, plan, 0.1);
    EXPECT_NEAR(entropic_objective(c, plan, 0.1), ours, 1e-12);
    for (int s = 0; s < 2000; ++s) {
      const Matrix other = oracle::random_feasible_plan_3x3(r, col, rng);
      ASSERT_LE(ours, oracle::entropic_objective(c, other, 0.1) + 1e-8);
    }
  }
}

TEST(Sinkhorn, LinearConvergenceInHilbertMetric) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix c = oracle::random_matrix(6, 5, rng, 0.0, 2.0);
    const Vector r = oracle::random_simplex(6, rng), col = oracle::random_simplex(5, rng);
    SinkhornOptions opt;
    opt.epsilon = 1.0;  // keeps tau(K) well below 1 so the bound is informative
    opt.tol = 1e-15;
    opt.max_iters = 2000;
    const TransportPlan star = sinkhorn(c, r, col, opt);
    opt.tol = 1e-8;
    opt.record_history = true;
    const TransportPlan run = sinkhorn(c, r, col, opt);
    ASSERT_TRUE(run.converged);
    const double tau = birkhoff_coefficient(gibbs_kernel(c, 1.0));
    ASSERT_LT(tau, 0.9);
    std::vector<double> ratios = contraction_ratios(run.log_v_history, star.log_v);
    ASSERT_FALSE(ratios.empty());
    const std::size_t from = ratios.size() > 10 ? ratios.size() - 10 : 0;
    for (std::size_t k = from; k < ratios.size(); ++k) EXPECT_LE(ratios[k], tau * tau + 0.05);
  }
}

TEST(Hilbert, Examples) {
  EXPECT_EQ(hilbert_metric(Vector{1, 2, 3}, Vector{1, 2, 3}), 0.0);
  EXPECT_NEAR(hilbert_metric(Vector{3, 6, 9}, Vector{1, 2, 3}), 0.0, 1e-15);
  EXPECT_NEAR(hilbert_metric(Vector{1, 2}, Vector{2, 1}), std::log(4.0), 1e-9);
  EXPECT_NEAR(hilbert_metric_log(Vector{0.0, std::log(2.0)}, Vector{std::log(2.0), 0.0}), std::log(4.0), 1e-12);
  EXPECT_THROW(hilbert_metric(Vector{1, 0}, Vector{1, 1}), InvalidArgument);
}

TEST(Birkhoff, Examples) {
  Matrix k(2, 2);
  k(0, 0) = k(1, 1) = 1.0;
  k(0, 1) = k(1, 0) = std::exp(-10.0);
  EXPECT_NEAR(projective_diameter(k), 20.0, 1e-9);
  EXPECT_NEAR(birkhoff_coefficient(k), std::tanh(5.0), 1e-6);
  EXPECT_NEAR(birkhoff_coefficient(k), 0.99991, 1e-5);
  Matrix rank_one(3, 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) rank_one(i, j) = (i + 1.0) * (0.5 + j);
  EXPECT_NEAR(birkhoff_coefficient(rank_one), 0.0, 1e-12);
  EXPECT_EQ(birkhoff_coefficient(Matrix(3, 3, 0.7)), 0.0);
  Matrix c(2, 2);
  c(0, 1) = c(1, 0) = 1.0;
  EXPECT_NEAR(birkhoff_coefficient_from_cost(c, 0.1), std::tanh(5.0), 1e-9);
  EXPECT_THROW(birkhoff_coefficient(Matrix(2, 2, 0.0)), InvalidArgument);
}

TEST(GroundingWeights, ClippedCosines) {
  Matrix za(2, 2);
  za(0, 0) = 1;
  za(1, 0) = 1;  // g = (1, 0)
  Matrix zb(4, 2);
  zb(0, 0) = 2;
  zb(1, 1) = 1;
  zb(2, 0) = -1;
  zb(3, 0) = 1;
  const std::vector<std::uint8_t> valid{1, 1, 1, 0};
  const GroundingWeights gw = grounding_weights(za, zb, valid);
  EXPECT_EQ(gw.context, (Vector{1, 0}));
  EXPECT_NEAR(gw.weights[0], 1.0, 1e-15);
  EXPECT_EQ(gw.weights[1], 0.0);
  EXPECT_EQ(gw.weights[2], 0.0);
  EXPECT_EQ(gw.weights[3], 0.0);
  EXPECT_THROW(grounding_weights(za, zb, std::vector<std::uint8_t>(4, 0)), InvalidArgument);
}

TEST(GuidedMarginals, FloorAndNormalization) {
  Marginals m = guided_marginals(Vector{2, 2, 2}, 4);
  for (double x : m.c) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
  for (double x : m.r) EXPECT_EQ(x, 0.25);
  m = guided_marginals(Vector{1, 0}, 3);
  EXPECT_NEAR(m.c[0], 1.0 / (1.0 + 1e-6), 1e-15);
  EXPECT_NEAR(m.c[1], 1e-6 / (1.0 + 1e-6), 1e-18);
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    Vector w = oracle::random_simplex(5, rng);
    w[t % 5] = 0.0;
    m = guided_marginals(w, 1 + t % 4);
    double sr = 0.0, sc = 0.0;
    for (double x : m.r) sr += x;
    for (double x : m.c) {
      EXPECT_GT(x, 0.0);
      sc += x;
    }
    EXPECT_NEAR(sr, 1.0, 1e-12);
    EXPECT_NEAR(sc, 1.0, 1e-12);
  }
}

TEST(ApplyGuidance, MaskAndColumnTerms) {
  std::mt19937_64 rng(12);
  const Matrix c = oracle::random_matrix(3, 2, rng, 0.0, 2.0);
  const Vector w{1.0, 0.25};
  GuidanceConfig g;
  g.mode = GuidanceMode::kMarginalReweight;
  g.mask = Matrix(3, 2, 1.0);
  EXPECT_EQ(apply_guidance(c, g, w), c);
  g.mask->operator()(1, 0) = 0.0;
  Matrix out = apply_guidance(c, g, w);
  EXPECT_DOUBLE_EQ(out(1, 0), c(1, 0) + 10.0);
  EXPECT_EQ(out(0, 0), c(0, 0));
  g.mask.reset();
  g.mode = GuidanceMode::kCostModulate;
  out = apply_guidance(c, g, w);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out(i, 0), c(i, 0));
    EXPECT_DOUBLE_EQ(out(i, 1), c(i, 1) + 0.5 * 0.75);
  }
  g.mode = GuidanceMode::kNone;
  EXPECT_EQ(apply_guidance(c, g, w), c);
  g.mode = GuidanceMode::kBoth;
  g.mask = Matrix(3, 2, 1.5);
  EXPECT_THROW(apply_guidance(c, g, w), InvalidArgument);
}

TEST(GuidanceMode, NamesRoundtrip) {
  for (GuidanceMode m : {GuidanceMode::kNone, GuidanceMode::kMarginalReweight, GuidanceMode::kCostModulate,
                         GuidanceMode::kBoth})
    EXPECT_EQ(parse_guidance_mode(to_string(m)), m);
  EXPECT_THROW(parse_guidance_mode("sideways"), InvalidArgument);
}

TEST(GcmtPlan, NoneModeIsPlainSinkhorn) {
  std::mt19937_64 rng(13);
  const Matrix za = oracle::random_matrix(5, 4, rng, 0, 1), zb = oracle::random_matrix(3, 4, rng, 0, 1);
  const std::vector<std::uint8_t> valid(3, 1);
  GuidanceConfig g;
  g.mode = GuidanceMode::kNone;
  const SinkhornOptions opt;
  const TransportPlan a = gcmt_plan(za, zb, valid, g, opt);
  const Vector r(5, 0.2), c(3, 1.0 / 3.0);
  const TransportPlan b = sinkhorn(cost_matrix(za, zb), r, c, opt);
  EXPECT_EQ(a.plan, b.plan);
  EXPECT_EQ(gcmt_plan(za, zb, valid, g, opt).plan, a.plan);
}

TEST(GcmtPlan, ConcentratedWeightTakesTheMass) {
  // Only text token 1 has positive cosine with the visual context.
  Matrix za(4, 3);
  for (std::size_t i = 0; i < 4; ++i) za(i, 0) = 1.0 + 0.1 * static_cast<double>(i);
  Matrix zb(3, 3);
  zb(0, 1) = 1.0;
  zb(1, 0) = 1.0;
  zb(2, 2) = 1.0;
  GuidanceConfig g;
  g.mode = GuidanceMode::kMarginalReweight;
  SinkhornOptions opt;
  opt.tol = 1e-12;
  opt.max_iters = 5000;
  const TransportPlan tp = gcmt_plan(za, zb, std::vector<std::uint8_t>(3, 1), g, opt);
  double col = 0.0, total = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      total += tp.plan(i, j);
      if (j == 1) col += tp.plan(i, j);
    }
  EXPECT_GE(col / total, 1.0 - 10.0 * 3 * 1e-6);
}

TEST(Barycentric, HalfIdentityCopiesRows) {
  Matrix plan(2, 2);
  plan(0, 0) = plan(1, 1) = 0.5;
  std::mt19937_64 rng(14);
  const Matrix src = oracle::random_matrix(2, 3, rng);
  EXPECT_EQ(barycentric_targets(plan, src, BarycentricDirection::kAToB), src);
  EXPECT_EQ(barycentric_targets(plan, src, BarycentricDirection::kBToA), src);
}

TEST(Barycentric, EqualRowsAndDeadRowFallback) {
  Matrix plan(2, 3);
  plan(0, 0) = 0.3;
  plan(0, 2) = 0.7;  // row 1 has no mass
  Matrix src(3, 2);
  for (std::size_t j = 0; j < 3; ++j) {
    src(j, 0) = 4.0;
    src(j, 1) = -1.0;
  }
  const Matrix out = barycentric_targets(plan, src, BarycentricDirection::kAToB);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(out(i, 0), 4.0, 1e-15);
    EXPECT_NEAR(out(i, 1), -1.0, 1e-15);
  }
  const Matrix w = barycentric_weights(plan, BarycentricDirection::kAToB);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(w(1, j), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(barycentric_targets(plan, Matrix(2, 2), BarycentricDirection::kAToB), DimensionError);
}

TEST(Barycentric, MatchesDenseComputationAndConvexHull) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix plan = oracle::random_matrix(3, 2, rng, 0.0, 1.0);
    const Matrix src_b = oracle::random_matrix(2, 4, rng), src_a = oracle::random_matrix(3, 4, rng);
    const Matrix ab = barycentric_targets(plan, src_b, BarycentricDirection::kAToB);
    const Matrix ba = barycentric_targets(plan, src_a, BarycentricDirection::kBToA);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t d = 0; d < 4; ++d) {
        const double ref = (plan(i, 0) * src_b(0, d) + plan(i, 1) * src_b(1, d)) / (plan(i, 0) + plan(i, 1));
        EXPECT_NEAR(ab(i, d), ref, 1e-12);
        EXPECT_GE(ab(i, d), std::min(src_b(0, d), src_b(1, d)) - 1e-12);
        EXPECT_LE(ab(i, d), std::max(src_b(0, d), src_b(1, d)) + 1e-12);
      }
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t d = 0; d < 4; ++d) {
        double num = 0.0, den = 0.0, lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < 3; ++i) {
          num += plan(i, j) * src_a(i, d);
          den += plan(i, j);
          lo = std::min(lo, src_a(i, d));
          hi = std::max(hi, src_a(i, d));
        }
        EXPECT_NEAR(ba(j, d), num / den, 1e-12);
        EXPECT_GE(ba(j, d), lo - 1e-12);
        EXPECT_LE(ba(j, d), hi + 1e-12);
      }
  }
}

}  // namespace
}  // namespace unisae
