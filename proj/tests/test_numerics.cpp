#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "unisae/error.hpp"
#include "unisae/numerics.hpp"

namespace unisae {
namespace {

TEST(TopK, KeepsLargest) {
  const Vector v{3, 1, 2};
  EXPECT_EQ(top_k(v, 2), (Vector{3, 0, 2}));
}

TEST(TopK, RectifiesNegatives) {
  EXPECT_EQ(top_k(Vector{-1, -2, -3}, 2), (Vector{0, 0, 0}));
}

TEST(TopK, TiesGoToLowestIndex) {
  EXPECT_EQ(top_k(Vector{1, 1, 1}, 1), (Vector{1, 0, 0}));
  EXPECT_EQ(top_k(Vector{0, 2, 5, 2, 2}, 3), (Vector{0, 2, 5, 2, 0}));
}

TEST(TopK, FewerPositivesThanK) {
  EXPECT_EQ(top_k(Vector{-1, 4, 0, 2}, 3), (Vector{0, 4, 0, 2}));
  EXPECT_EQ(top_k(Vector{1, 2}, 0), (Vector{0, 0}));
}

TEST(TopK, SupportAscending) {
  EXPECT_EQ(top_k_support(Vector{0.5, 3, -1, 2, 2}, 3), (std::vector<std::size_t>{1, 3, 4}));
}

TEST(TopK, PropertiesOnRandomVectors) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(1, 20);
  for (int trial = 0; trial < 500; ++trial) {
    Vector v(static_cast<std::size_t>(len(rng)));
    for (double& x : v) x = std::round(u(rng) * 4.0) / 4.0;  // force ties
    const std::size_t k = static_cast<std::size_t>(trial % 6);
    const Vector out = top_k(v, k);
    std::size_t nnz = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      ASSERT_GE(out[i], 0.0);
      ASSERT_TRUE(out[i] == 0.0 || out[i] == v[i]);
      ASSERT_LE(out[i], std::max(v[i], 0.0));
      nnz += out[i] != 0.0;
    }
    ASSERT_LE(nnz, k);
    ASSERT_EQ(top_k(out, k), out) << "idempotence";
    // Every dropped positive is no larger than every kept value.
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j)
        if (out[i] > 0.0 && out[j] == 0.0 && v[j] > 0.0) {
          ASSERT_GE(v[i], v[j]);
          if (v[i] == v[j]) ASSERT_LT(i, j);
        }
  }
}

TEST(Cosine, Basics) {
  EXPECT_DOUBLE_EQ(cosine(Vector{1, 0}, Vector{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine(Vector{1, 0}, Vector{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine(Vector{0, 0}, Vector{1, 2}), 0.0);
  EXPECT_THROW(cosine(Vector{1, 0}, Vector{1, 0, 0}), DimensionError);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), s(0.1, 10.0);
  for (int t = 0; t < 200; ++t) {
    Vector a(5), b(5);
    for (double& x : a) x = u(rng);
    for (double& x : b) x = u(rng);
    const double c = cosine(a, b);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, cosine(b, a), 1e-15);
    Vector a2 = a, b2 = b;
    const double sa = s(rng), sb = s(rng);
    for (double& x : a2) x *= sa;
    for (double& x : b2) x *= sb;
    EXPECT_NEAR(c, cosine(a2, b2), 1e-12);
  }
}

TEST(Adam, ZeroGradNoDecayLeavesParam) {
  Vector p{0.5, -2.0};
  AdamState s = AdamState::zeros(2);
  adam_step(p, Vector{0, 0}, s, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(p, (Vector{0.5, -2.0}));
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepHandEvaluated) {
  // m_hat = 1, v_hat = 1, step = lr * 1 / (1 + 1e-8).
  Vector p{0.0};
  AdamState s = AdamState::zeros(1);
  adam_step(p, Vector{1.0}, s, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_NEAR(p[0], -1e-3, 1e-9);
}

TEST(Adam, Deterministic) {
  Vector p1{1, 2, 3}, p2 = p1;
  AdamState s1 = AdamState::zeros(3), s2 = s1;
  const Vector g{0.1, -0.2, 0.3};
  adam_step(p1, g, s1, {});
  adam_step(p2, g, s2, {});
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(s1, s2);
}

TEST(Adam, DecoupledWeightDecay) {
  Vector p{2.0};
  AdamState s = AdamState::zeros(1);
  adam_step(p, Vector{0.0}, s, {0.1, 0.9, 0.999, 1e-8, 0.5});
  EXPECT_NEAR(p[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(Adam, RejectsNonFiniteGradient) {
  Vector p{1.0};
  AdamState s = AdamState::zeros(1);
  EXPECT_THROW(adam_step(p, Vector{std::nan("")}, s, {}), NumericalError);
}

TEST(Matrix, BasicsAndMatvec) {
  std::mt19937_64 rng(5);
  const Matrix a = oracle::random_matrix(3, 4, rng);
  const Vector x{1, -1, 0.5, 2};
  Vector y(3);
  matvec(a, x, y);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += a(r, c) * x[c];
    EXPECT_NEAR(y[r], s, 1e-15);
  }
  EXPECT_EQ(a.transposed().transposed(), a);
  EXPECT_EQ(a.transposed()(2, 1), a(1, 2));
  const Vector mean = column_mean(a);
  EXPECT_NEAR(mean[0], (a(0, 0) + a(1, 0) + a(2, 0)) / 3.0, 1e-15);
}

}  // namespace
}  // namespace unisae
