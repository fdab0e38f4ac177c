#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nstab/closed_forms.hpp"
#include "nstab/simulate.hpp"
#include "nstab/stability_mc.hpp"

using namespace nstab;

namespace {
double relu(double x) { return x > 0.0 ? x : 0.0; }
bool within(const StabilityEstimate& e, double target, double k = 3.0) { return std::abs(e.mean - target) <= k * e.std_error; }
}  // namespace

TEST(Welford, MatchesTwoPassAndMerges) {
  Rng rng(1);
  std::vector<double> v(1000);
  for (auto& x : v) x = rng.normal(3.0, 2.0);
  Welford all, a, b;
  for (std::size_t i = 0; i < v.size(); ++i) {
    all.add(v[i]);
    (i < 400 ? a : b).add(v[i]);
  }
  a.merge(b);
  double mean = 0.0, ss = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  for (double x : v) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(all.mean(), mean, 1e-12);
  EXPECT_NEAR(all.variance(), ss / (v.size() - 1), 1e-10);
  EXPECT_NEAR(a.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(a.variance(), all.variance(), 1e-10);
  EXPECT_NEAR(all.std_error(), std::sqrt(ss / (v.size() - 1) / v.size()), 1e-12);
}

TEST(StabilityMc, IdentityScalar) {
  GaussianPairSampler s(0.7, 1, 1, 1);
  const auto e = estimate_stability([](const Matrix& x) { return x(0, 0); }, s, 200000);
  EXPECT_TRUE(within(e, 0.7));
  EXPECT_EQ(e.n_samples, 200000u);
  EXPECT_EQ(e.rho, 0.7);
}

TEST(StabilityMc, ReluKernelValue) {
  const double target = (std::sqrt(0.75) + 0.5 * (std::numbers::pi - std::numbers::pi / 3)) / (2 * std::numbers::pi);
  EXPECT_NEAR(target, 0.30450, 1e-5);
  GaussianPairSampler s(0.5, 1, 1, 2);
  EXPECT_TRUE(within(estimate_stability([](const Matrix& x) { return relu(x(0, 0)); }, s, 1000000), target));
}

TEST(StabilityMc, ConstantIsExact) {
  GaussianPairSampler s(0.3, 2, 2, 3);
  const auto e = estimate_stability([](const Matrix&) { return 1.5; }, s, 1000);
  EXPECT_EQ(e.mean, 2.25);
  EXPECT_EQ(e.std_error, 0.0);
}

TEST(StabilityMc, RhoOneEqualsSecondMomentOnSameStream) {
  GaussianPairSampler s(1.0, 1, 3, 4);
  auto f = [](const Matrix& x) { return relu(x(0, 0)) - x(0, 1) * x(0, 2); };
  const auto a = estimate_stability(f, s, 50000);
  const auto b = estimate_second_moment(f, s, 50000);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(StabilityMc, DeterministicGivenSeed) {
  GaussianPairSampler s(0.2, 2, 2, 5);
  auto f = [](const Matrix& x) { return x.sum(); };
  EXPECT_EQ(estimate_stability(f, s, 10000).mean, estimate_stability(f, s, 10000).mean);
  EXPECT_NE(estimate_stability(f, s, 10000).mean, estimate_stability(f, GaussianPairSampler(0.2, 2, 2, 6), 10000).mean);
}

TEST(StabilityMc, NonFiniteOutputAborts) {
  GaussianPairSampler s(0.2, 1, 1, 5);
  EXPECT_THROW(estimate_stability([](const Matrix& x) { return x(0, 0) > 2.0 ? std::nan("") : 1.0; }, s, 100000),
               NumericalFailure);
  EXPECT_THROW(estimate_stability([](const Matrix&) { return 1.0; }, s, 1), InvalidArgument);
}

TEST(StabilityMc, HalvingSamplesInflatesStdErrorBySqrtTwo) {
  double ratio = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    GaussianPairSampler a(0.5, 1, 1, 100 + r), b(0.5, 1, 1, 200 + r);
    auto f = [](const Matrix& x) { return relu(x(0, 0)); };
    ratio += estimate_stability(f, a, 5000).std_error / estimate_stability(f, b, 10000).std_error;
  }
  ratio /= reps;
  EXPECT_GE(ratio, 1.2);
  EXPECT_LE(ratio, 1.7);
}

TEST(StabilityMc, EntrywiseIdentityMap) {
  GaussianPairSampler s(0.4, 3, 5, 7);
  auto id = [](const Matrix& x) { return x; };
  EXPECT_TRUE(within(estimate_entrywise_stability(id, s, 100000, 2, 4), 0.4));
  EXPECT_THROW(estimate_entrywise_stability(id, s, 10, 3, 0), InvalidArgument);
}

TEST(StabilityMc, EntrywiseIdentityAttention) {
  const auto attn = AttentionLayer::identity(Matrix::Identity(256, 256));
  GaussianPairSampler s(0.5, 8, 256, 8);
  const auto e = estimate_entrywise_stability(attn, s, 20000, 0, 0);
  EXPECT_NEAR(e.mean, 0.5, std::max(3.0 * e.std_error, 0.02));
}

TEST(StabilityMc, PairedEstimateDifference) {
  GaussianPairSampler s(0.5, 2, 2, 9);
  auto f = [](const Matrix& x) { return x; };
  auto g = [](const Matrix& x) { return Matrix(2.0 * x); };
  const auto p = estimate_paired_entrywise(f, g, s, 10000, 1, 1);
  EXPECT_NEAR(p.second.mean, 4.0 * p.first.mean, 1e-12);
  EXPECT_NEAR(p.difference.mean, p.first.mean - p.second.mean, 1e-12);
}

TEST(PatternAgreement, Extremes) {
  const auto one = estimate_pattern_agreement(8, 32, 1.0, 20000, 1);
  EXPECT_EQ(one.mean, 1.0);
  const auto zero = estimate_pattern_agreement(8, 32, 0.0, 100000, 2);
  EXPECT_TRUE(within(zero, 1.0 / 8.0));
  EXPECT_THROW(estimate_pattern_agreement(1, 4, 0.5, 10, 0), InvalidArgument);
}

TEST(PatternAgreement, MatchesDoubleIntegral) {
  const auto e = estimate_pattern_agreement(8, 256, 0.5, 100000, 3);
  EXPECT_TRUE(within(e, pattern_agreement_s(8, 0.5))) << e.mean << " vs " << pattern_agreement_s(8, 0.5);
}
