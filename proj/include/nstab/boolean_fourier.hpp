#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nstab/error.hpp"
#include "nstab/io.hpp"
#include "nstab/rng.hpp"
#include "nstab/stability_mc.hpp"

namespace nstab {

inline constexpr int kMaxBooleanArity = 20;

// Inputs x in {-1,1}^n are encoded as bitmasks: bit i-1 holds coordinate i, with bit value 0
// meaning +1 and 1 meaning -1. Subsets U of [n] use the same bitmask layout.

struct BooleanFunction {
  int n = 0;
  std::vector<double> table;  // f(x) for every input mask x

  void validate() const {
    detail::require(n >= 1 && n <= kMaxBooleanArity,
                    "boolean function: arity must lie in [1, " + std::to_string(kMaxBooleanArity) + "]");
    detail::require(table.size() == (std::size_t{1} << n), "boolean function: table length must be 2^n");
    for (double v : table) detail::require(std::isfinite(v), "boolean function: non-finite table value");
  }

  /// Tabulates f, which receives the input mask.
  static BooleanFunction from(int n, const std::function<double(std::uint32_t)>& f) {
    detail::require(n >= 1 && n <= kMaxBooleanArity, "boolean function: arity out of range");
    BooleanFunction out{n, std::vector<double>(std::size_t{1} << n)};
    for (std::uint32_t x = 0; x < out.table.size(); ++x) out.table[x] = f(x);
    return out;
  }
};

/// +1 or -1 value of coordinate i (1-based) of input mask x.
inline int coord(std::uint32_t x, int i) { return (x >> (i - 1)) & 1u ? -1 : 1; }

/// chi_U(x) = prod_{i in U} x_i.
inline int character(std::uint32_t U, std::uint32_t x) { return std::popcount(U & x) & 1 ? -1 : 1; }

struct BooleanSpectrum {
  int n = 0;
  std::vector<double> coeffs;  // coeffs[U] = E_x[f(x) chi_U(x)]
};

namespace detail {
inline void butterfly(std::vector<double>& a) {
  for (std::size_t h = 1; h < a.size(); h <<= 1) {
    for (std::size_t i = 0; i < a.size(); i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double u = a[j], v = a[j + h];
        a[j] = u + v;
        a[j + h] = u - v;
      }
    }
  }
}
}  // namespace detail

/// Fast Walsh-Hadamard transform, O(n 2^n).
inline BooleanSpectrum wht(const BooleanFunction& f) {
  f.validate();
  BooleanSpectrum s{f.n, f.table};
  detail::butterfly(s.coeffs);
  const double scale = std::ldexp(1.0, -f.n);
  for (double& c : s.coeffs) c *= scale;
  return s;
}

inline BooleanFunction inverse_wht(const BooleanSpectrum& s) {
  detail::require(s.n >= 1 && s.n <= kMaxBooleanArity && s.coeffs.size() == (std::size_t{1} << s.n),
                  "boolean spectrum: malformed coefficient table");
  BooleanFunction f{s.n, s.coeffs};
  detail::butterfly(f.table);
  return f;
}

inline double mean_square(const BooleanFunction& f) {
  double acc = 0.0;
  for (double v : f.table) acc += v * v;
  return acc / static_cast<double>(f.table.size());
}

inline double variance(const BooleanFunction& f) {
  double mean = 0.0;
  for (double v : f.table) mean += v;
  mean /= static_cast<double>(f.table.size());
  return mean_square(f) - mean * mean;
}

/// Inf_i[f] = sum of fhat(S)^2 over S containing coordinate i (1-based).
inline double influence(const BooleanSpectrum& s, int i) {
  detail::require(i >= 1 && i <= s.n, "influence: coordinate " + std::to_string(i) + " outside [1, " +
                                          std::to_string(s.n) + "]");
  const std::uint32_t bit = 1u << (i - 1);
  double acc = 0.0;
  for (std::uint32_t U = 0; U < s.coeffs.size(); ++U)
    if (U & bit) acc += s.coeffs[U] * s.coeffs[U];
  return acc;
}

/// Inf_i[f] = E_x[((f(x) - f(x with coordinate i flipped)) / 2)^2], straight from the table.
inline double flip_influence(const BooleanFunction& f, int i) {
  f.validate();
  detail::require(i >= 1 && i <= f.n, "influence: coordinate out of range");
  const std::uint32_t bit = 1u << (i - 1);
  double acc = 0.0;
  for (std::uint32_t x = 0; x < f.table.size(); ++x) {
    const double d = (f.table[x] - f.table[x ^ bit]) / 2.0;
    acc += d * d;
  }
  return acc / static_cast<double>(f.table.size());
}

/// I[f] = sum_S |S| fhat(S)^2.
inline double total_influence(const BooleanSpectrum& s) {
  double acc = 0.0;
  for (std::uint32_t U = 0; U < s.coeffs.size(); ++U) acc += std::popcount(U) * s.coeffs[U] * s.coeffs[U];
  return acc;
}

/// W^k[f] for k = 0..n.
inline std::vector<double> degree_weights(const BooleanSpectrum& s) {
  std::vector<double> w(static_cast<std::size_t>(s.n) + 1, 0.0);
  for (std::uint32_t U = 0; U < s.coeffs.size(); ++U) w[std::popcount(U)] += s.coeffs[U] * s.coeffs[U];
  return w;
}

/// Largest |S| with |fhat(S)| > tol, or -1 for the zero function.
inline int degree(const BooleanSpectrum& s, double tol = 1e-12) {
  int d = -1;
  for (std::uint32_t U = 0; U < s.coeffs.size(); ++U)
    if (std::abs(s.coeffs[U]) > tol) d = std::max(d, std::popcount(U));
  return d;
}

/// Stab_rho[f] = sum_S rho^|S| fhat(S)^2.
inline double boolean_stability(const BooleanSpectrum& s, double rho) {
  detail::require(rho >= -1.0 && rho <= 1.0, "boolean stability: rho must lie in [-1, 1]");
  std::vector<double> w = degree_weights(s);
  double acc = 0.0, rk = 1.0;
  for (double wk : w) {
    acc += rk * wk;
    rk *= rho;
  }
  return acc;
}

/// E[f(x) f(y)] by sampling: x uniform, y flips each bit of x independently with probability
/// (1 - rho) / 2.
inline StabilityEstimate sampled_boolean_stability(const BooleanFunction& f, double rho, std::uint64_t n_samples,
                                                   std::uint64_t seed) {
  f.validate();
  detail::require(rho >= -1.0 && rho <= 1.0, "boolean stability: rho must lie in [-1, 1]");
  detail::require(n_samples >= 2, "boolean stability: needs at least 2 samples");
  const double flip = (1.0 - rho) / 2.0;
  Welford total;
  for (std::uint64_t start = 0, block = 0; start < n_samples; start += kDefaultBlockSize, ++block) {
    Rng rng = Rng::substream(seed, block);
    Welford acc;
    const std::uint64_t end = std::min(n_samples, start + kDefaultBlockSize);
    for (std::uint64_t s = start; s < end; ++s) {
      const auto x = static_cast<std::uint32_t>(rng.uniform_int(f.table.size()));
      std::uint32_t y = x;
      for (int i = 0; i < f.n; ++i)
        if (rng.uniform() < flip) y ^= 1u << i;
      acc.add(f.table[x] * f.table[y]);
    }
    total.merge(acc);
  }
  return total.estimate(rho);
}

/// CSV with columns mask,coefficient.
inline void write_spectrum_csv(const BooleanSpectrum& s, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"mask", "coefficient"});
  for (std::uint32_t U = 0; U < s.coeffs.size(); ++U) csv.row({std::to_string(U), io::format_double(s.coeffs[U])});
}

}  // namespace nstab
