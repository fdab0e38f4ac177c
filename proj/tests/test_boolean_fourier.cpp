#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nstab/boolean_fourier.hpp"

using namespace nstab;

namespace {

BooleanFunction dictator(int n) {
  return BooleanFunction::from(n, [](std::uint32_t x) { return double(coord(x, 1)); });
}

BooleanFunction majority3() {
  return BooleanFunction::from(3, [](std::uint32_t x) {
    return coord(x, 1) + coord(x, 2) + coord(x, 3) > 0 ? 1.0 : -1.0;
  });
}

BooleanFunction parity(int n, int k) {
  return BooleanFunction::from(n, [k](std::uint32_t x) { return double(character((1u << k) - 1, x)); });
}

BooleanFunction random_function(Rng& rng, int n) {
  return BooleanFunction::from(n, [&](std::uint32_t) { return rng.normal(); });
}

// Direct sum 2^-n sum_x f(x) chi_U(x), independent of the butterfly.
double brute_coefficient(const BooleanFunction& f, std::uint32_t U) {
  double acc = 0.0;
  for (std::uint32_t x = 0; x < f.table.size(); ++x) acc += f.table[x] * character(U, x);
  return acc / double(f.table.size());
}

}  // namespace

TEST(BooleanFourier, EncodingFollowsBitConvention) {
  EXPECT_EQ(coord(0b000, 1), 1);
  EXPECT_EQ(coord(0b001, 1), -1);
  EXPECT_EQ(coord(0b100, 3), -1);
  EXPECT_EQ(character(0b011, 0b001), -1);
  EXPECT_EQ(character(0b011, 0b011), 1);
}

TEST(BooleanFourier, DictatorSpectrum) {
  const auto s = wht(dictator(2));
  EXPECT_NEAR(s.coeffs[0b01], 1.0, 1e-15);
  for (std::uint32_t U : {0u, 2u, 3u}) EXPECT_NEAR(s.coeffs[U], 0.0, 1e-15);
}

TEST(BooleanFourier, ParitySpectrum) {
  const auto s = wht(parity(2, 2));
  EXPECT_NEAR(s.coeffs[0b11], 1.0, 1e-15);
  for (std::uint32_t U : {0u, 1u, 2u}) EXPECT_NEAR(s.coeffs[U], 0.0, 1e-15);
}

TEST(BooleanFourier, MajorityMatchesBruteForce) {
  const auto f = majority3();
  const auto s = wht(f);
  for (std::uint32_t U = 0; U < 8; ++U) EXPECT_NEAR(s.coeffs[U], brute_coefficient(f, U), 1e-15);
  for (std::uint32_t U : {1u, 2u, 4u}) EXPECT_NEAR(s.coeffs[U], 0.5, 1e-15);
  EXPECT_NEAR(s.coeffs[7], -0.5, 1e-15);
  for (std::uint32_t U : {0u, 3u, 5u, 6u}) EXPECT_NEAR(s.coeffs[U], 0.0, 1e-15);
}

TEST(BooleanFourier, InverseRecoversTable) {
  Rng rng(5);
  for (int n = 1; n <= 10; ++n) {
    const auto f = random_function(rng, n);
    const auto g = inverse_wht(wht(f));
    for (std::size_t x = 0; x < f.table.size(); ++x) EXPECT_NEAR(g.table[x], f.table[x], 1e-10);
  }
}

TEST(BooleanFourier, ArityOutOfRangeRejected) {
  BooleanFunction f{21, {}};
  EXPECT_THROW(wht(f), InvalidArgument);
  BooleanFunction g{2, {1.0, 2.0}};
  EXPECT_THROW(wht(g), InvalidArgument);
  EXPECT_THROW(BooleanFunction::from(0, [](std::uint32_t) { return 0.0; }), InvalidArgument);
}

TEST(BooleanFourier, Influences) {
  const auto d = wht(dictator(2));
  EXPECT_NEAR(influence(d, 1), 1.0, 1e-15);
  EXPECT_NEAR(influence(d, 2), 0.0, 1e-15);
  const auto m = majority3();
  EXPECT_NEAR(influence(wht(m), 1), 0.5, 1e-15);
  EXPECT_NEAR(flip_influence(m, 1), 0.5, 1e-15);
  EXPECT_THROW(influence(d, 0), InvalidArgument);
  EXPECT_THROW(influence(d, 3), InvalidArgument);
}

TEST(BooleanFourier, TotalInfluence) {
  EXPECT_NEAR(total_influence(wht(parity(5, 3))), 3.0, 1e-14);
  EXPECT_NEAR(total_influence(wht(BooleanFunction::from(4, [](std::uint32_t) { return 2.0; }))), 0.0, 1e-15);
  const auto m = majority3();
  double brute = 0.0;
  for (int i = 1; i <= 3; ++i) brute += flip_influence(m, i);
  EXPECT_NEAR(total_influence(wht(m)), brute, 1e-14);
  EXPECT_NEAR(brute, 1.5, 1e-14);
}

TEST(BooleanFourier, StabilityExamples) {
  EXPECT_NEAR(boolean_stability(wht(parity(2, 2)), 0.5), 0.25, 1e-15);
  EXPECT_NEAR(boolean_stability(wht(majority3()), 0.5), 3 * 0.5 * 0.25 + 0.125 * 0.25, 1e-15);
  Rng rng(9);
  const auto f = random_function(rng, 6);
  EXPECT_NEAR(boolean_stability(wht(f), 1.0), mean_square(f), 1e-12);
  EXPECT_THROW(boolean_stability(wht(f), 1.5), InvalidArgument);
}

TEST(BooleanFourier, StabilityMatchesSampling) {
  const auto f = majority3();
  const double exact = boolean_stability(wht(f), 0.5);
  const auto est = sampled_boolean_stability(f, 0.5, 1000000, 3);
  EXPECT_LE(std::abs(est.mean - exact), 3.0 * est.std_error);
  Rng rng(2);
  const auto g = random_function(rng, 5);
  const auto eg = sampled_boolean_stability(g, -0.3, 1000000, 4);
  EXPECT_LE(std::abs(eg.mean - boolean_stability(wht(g), -0.3)), 3.0 * eg.std_error);
}

TEST(BooleanFourier, ParsevalAndPoincareOnRandomTables) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + int(rng.uniform_int(8));
    const auto f = random_function(rng, n);
    const auto s = wht(f);
    double parseval = 0.0;
    for (double c : s.coeffs) parseval += c * c;
    EXPECT_NEAR(parseval, mean_square(f), 1e-10 * mean_square(f));
    EXPECT_LE(variance(f), total_influence(s) + 1e-12);
    for (int i = 1; i <= n; ++i) EXPECT_NEAR(influence(s, i), flip_influence(f, i), 1e-10);
  }
}

TEST(BooleanFourier, StabilityMonotoneForNonnegativeSpectrum) {
  const auto s = wht(majority3());
  double prev = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const double v = boolean_stability(s, k / 20.0);
    EXPECT_GE(v, prev - 1e-15);
    prev = v;
  }
}

TEST(BooleanFourier, DegreeWeights) {
  const auto w = degree_weights(wht(majority3()));
  ASSERT_EQ(w.size(), 4u);
  EXPECT_NEAR(w[1], 0.75, 1e-15);
  EXPECT_NEAR(w[3], 0.25, 1e-15);
  EXPECT_EQ(degree(wht(majority3())), 3);
}

TEST(BooleanFourier, SpectrumCsv) {
  const auto path = std::filesystem::temp_directory_path() / "nstab_boolean_spectrum.csv";
  write_spectrum_csv(wht(dictator(2)), path);
  std::ifstream in(path, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, "mask,coefficient\n0,0\n1,1\n2,0\n3,0\n");
  std::filesystem::remove(path);
}
