#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nstab/interval.hpp"

using namespace nstab;

TEST(MlpBb, Examples) {
  EXPECT_NEAR(mlp_bb_stability(0.0, 1.0, 1.0, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(mlp_bb_stability(0.0, 1.0, 0.0, 1.0), 1.0 / (2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(mlp_bb_stability(0.0, 1.0, 0.5, 1.0), 0.329577, 1e-6);
  EXPECT_THROW(mlp_bb_stability(0.0, 0.0, 0.5, 1.0), InvalidArgument);
  EXPECT_THROW(mlp_bb_stability(0.0, 1.0, 0.5, 0.0), InvalidArgument);
}

TEST(MlpBb, AffineInRho) {
  const double a = mlp_bb_stability(0.0, 1.0, 0.0, 1.0), b = mlp_bb_stability(0.0, 1.0, 1.0, 1.0);
  for (int k = 0; k <= 20; ++k) {
    const double rho = k / 20.0;
    EXPECT_NEAR(mlp_bb_stability(0.0, 1.0, rho, 1.0), a + rho * (b - a), 1e-12);
  }
}

TEST(MlpBb, SpecOverloadAndMonteCarlo) {
  EntryGaussianSpec spec{Matrix::Constant(2, 2, 0.3), Matrix::Constant(2, 2, 1.2), Matrix::Constant(2, 2, 0.4), 1.5};
  EXPECT_EQ(mlp_bb_stability(spec, 1, 1), mlp_bb_stability(0.3, 1.2, 0.4, 1.5));
  EXPECT_THROW(mlp_bb_stability(spec, 2, 0), InvalidArgument);
  const auto e = estimate_mlp_bb_stability(0.3, 1.2, 0.4, 1.5, 1000000, 8);
  EXPECT_LE(std::abs(e.mean - mlp_bb_stability(0.3, 1.2, 0.4, 1.5)), 3.0 * e.std_error);
}

TEST(MlpBb, MomentOracles) {
  // E[ReLU(X)] and E[ReLU(X)^2] by quadrature of the N(mu, sigma^2) density.
  for (double mu : {-1.0, 0.0, 0.8}) {
    for (double sigma : {0.5, 2.0}) {
      auto pdf = [&](double x) { return normal_pdf((x - mu) / sigma) / sigma; };
      const double m1 = detail::gauss_kronrod([&](double x) { return x * pdf(x); }, 0.0, mu + 14 * sigma, 1e-13).value;
      const double m2 = detail::gauss_kronrod([&](double x) { return x * x * pdf(x); }, 0.0, mu + 14 * sigma, 1e-13).value;
      EXPECT_NEAR(mlp_bb_stability(mu, sigma, 0.0, 1.0), m1 * m1, 1e-10);
      EXPECT_NEAR(mlp_bb_stability(mu, sigma, 1.0, 2.0), 2.0 * m2, 1e-10);
    }
  }
}

TEST(AttentionInterval, IdentityValueMatrix) {
  // Distinct unit columns e_j, e_j' still share the single positive product at (j, j').
  const Matrix Z = Matrix::Zero(3, 3);
  const auto r = attention_interval(0.5, 0.5, 1.0, Z, Z, Matrix::Identity(3, 3), 2);
  EXPECT_TRUE(r.premise_ok);
  EXPECT_NEAR(r.lower, 0.5, 1e-15);
  EXPECT_NEAR(r.upper, 0.5, 1e-15);
}

TEST(AttentionInterval, PremiseFailureNamesColumnPair) {
  const Matrix Z = Matrix::Zero(2, 2);
  Matrix V(2, 2);
  V << 1.0, 1.0, 1.0, -1.0;
  const auto r = attention_interval_report(0.5, 0.5, 1.0, Z, Z, V, 2);
  EXPECT_FALSE(r.premise_ok);
  EXPECT_EQ(r.bad_j, 0);
  EXPECT_EQ(r.bad_jp, 1);
  EXPECT_EQ(r.bad_value, 0.0);
  try {
    attention_interval(0.5, 0.5, 1.0, Z, Z, V, 2);
    FAIL() << "expected a premise failure";
  } catch (const PremiseFailure& e) {
    EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos) << e.what();
  }
}

TEST(AttentionInterval, AllOnesValueMatrix) {
  const Matrix Z = Matrix::Zero(2, 2);
  const auto r = attention_interval(0.5, 0.5, 1.0, Z, Z, Matrix::Ones(2, 2), 3);
  EXPECT_TRUE(r.premise_ok);
  EXPECT_EQ(r.E, 1.0);
  EXPECT_NEAR(r.R_l, 2.0, 1e-15);
  EXPECT_NEAR(r.R_r, 2.0, 1e-15);
  EXPECT_NEAR(r.lower, 2.0, 1e-15);
  EXPECT_NEAR(r.upper, 2.0, 1e-15);
}

TEST(AttentionInterval, SPlusMinus) {
  Eigen::VectorXd x(2), y(2);
  x << 1.0, -2.0;
  y << 3.0, 0.5;
  EXPECT_EQ(s_plus(x, y), 3.0 + 0.5);
  EXPECT_EQ(s_minus(x, y), -6.0 - 1.0);
  Matrix m(2, 2);
  m << 1, -4, 2, 3;
  EXPECT_EQ(max_abs(m), 4.0);
}

TEST(AttentionInterval, WidthMonotoneInBAndWeights) {
  Rng rng(3);
  Matrix K = Matrix::Random(3, 3) * 0.2, Q = Matrix::Random(3, 3) * 0.2, V = Matrix::Constant(3, 3, 0.5);
  double prev = -1.0;
  for (double B : {0.1, 0.3, 0.6, 1.0}) {
    const auto r = attention_interval(0.2, 0.4, B, K, Q, V, 3);
    EXPECT_LE(r.lower, r.upper);
    EXPECT_GT(r.lower, 0.0);
    EXPECT_GT(r.upper - r.lower, prev);
    prev = r.upper - r.lower;
  }
  prev = -1.0;
  for (double s : {0.0, 0.5, 1.0, 2.0}) {
    const auto r = attention_interval(0.2, 0.4, 0.5, Matrix(K * s), Q, V, 3);
    EXPECT_GE(r.upper - r.lower, prev);
    prev = r.upper - r.lower;
  }
}

TEST(AttentionInterval, RejectsBadArguments) {
  const Matrix Z = Matrix::Zero(2, 2), O = Matrix::Ones(2, 2);
  EXPECT_THROW(attention_interval(0.0, 0.5, 1.0, Z, Z, O, 2), InvalidArgument);
  EXPECT_THROW(attention_interval(0.6, 0.5, 1.0, Z, Z, O, 2), InvalidArgument);
  EXPECT_THROW(attention_interval(0.5, 0.5, 1.0, Matrix::Zero(3, 3), Z, O, 2), InvalidArgument);
}

TEST(AttentionInterval, ClippedMeanOracle) {
  for (double mu : {0.2, 0.7}) {
    for (double B : {0.5, 1.0}) {
      auto g = [&](double z) { return std::clamp(mu + 0.6 * z, -B, B) * normal_pdf(z); };
      EXPECT_NEAR(clipped_normal_mean(mu, 0.6, B), detail::gauss_kronrod(g, -12.0, 12.0, 1e-13).value, 1e-9);
    }
  }
}

TEST(AttentionInterval, EnclosesMonteCarloCrossMoments) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const auto inst = random_interval_instance(rng, 50000);
    const auto r = interval_for(inst);
    EXPECT_LE(r.lower, r.upper);
    EXPECT_GT(r.lower, 0.0);
    const auto e = estimate_attention_cross_moment(inst, 20000, 1000 + t);
    EXPECT_GE(e.mean + 3.0 * e.std_error, r.lower) << "instance " << t;
    EXPECT_LE(e.mean - 3.0 * e.std_error, r.upper) << "instance " << t;
  }
}
