#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nstab/error.hpp"
#include "nstab/io.hpp"
#include "nstab/rng.hpp"
#include "nstab/types.hpp"

namespace nstab {

/// Degree-k Hermite polynomial orthonormal under N(0,1): h_0 = 1, h_1 = x,
/// h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1).
inline double hermite_value(int k, double x) {
  detail::require(k >= 0, "hermite: degree must be >= 0");
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int j = 1; j < k; ++j) {
    const double next = (x * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(static_cast<double>(j + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Gauss-Hermite rule for the standard normal density (weights sum to one), m nodes, exact for
/// polynomials of degree <= 2m - 1. Nodes by Golub-Welsch.
struct GaussHermiteRule {
  std::vector<double> nodes, weights;

  explicit GaussHermiteRule(int m) {
    detail::require(m >= 1 && m <= 200, "gauss-hermite: order must lie in [1, 200]");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (int k = 1; k < m; ++k) J(k - 1, k) = J(k, k - 1) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success) throw NumericalFailure("gauss-hermite: eigen-decomposition failed");
    nodes.resize(static_cast<std::size_t>(m));
    weights.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
      const double v = es.eigenvectors()(0, i);
      weights[static_cast<std::size_t>(i)] = v * v;
    }
  }

  int order() const { return static_cast<int>(nodes.size()); }
};

using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

struct HermiteSpectrum {
  int dim = 0;
  int max_degree = 0;
  std::map<MultiIndex, double> coeffs;  // normalized coefficients, |alpha| <= max_degree

  double coeff(const MultiIndex& a) const {
    auto it = coeffs.find(a);
    return it == coeffs.end() ? 0.0 : it->second;
  }

  /// Sum of squared coefficients (equals E[f^2] when f lies in the truncation).
  double norm_sq() const {
    double acc = 0.0;
    for (const auto& [a, c] : coeffs) acc += c * c;
    return acc;
  }

  /// W^k: mass at total degree k, k = 0..max_degree (or up to the largest stored degree).
  std::vector<double> level_weights() const {
    int top = max_degree;
    for (const auto& [a, c] : coeffs) top = std::max(top, total_degree(a));
    std::vector<double> w(static_cast<std::size_t>(top) + 1, 0.0);
    for (const auto& [a, c] : coeffs) w[static_cast<std::size_t>(total_degree(a))] += c * c;
    return w;
  }
};

inline constexpr int kDefaultQuadOrder = 40;
inline constexpr int kDefaultHermiteDegree = 12;
inline constexpr int kMaxProjectionDim = 4;

/// Hermite coefficients of f : R^dim -> R by tensor-product Gauss-Hermite quadrature.
/// f is called with an Eigen::VectorXd of length dim.
template <class F>
HermiteSpectrum project(F&& f, int dim, int max_degree = kDefaultHermiteDegree, int quad_order = kDefaultQuadOrder) {
  detail::require(dim >= 1 && dim <= kMaxProjectionDim,
                  "project: dim must lie in [1, " + std::to_string(kMaxProjectionDim) + "]");
  detail::require(max_degree >= 0, "project: max_degree must be >= 0");
  detail::require(quad_order >= max_degree + 1, "project: quad_order must be >= max_degree + 1");
  const GaussHermiteRule rule(quad_order);
  const int m = quad_order, K = max_degree + 1;

  // Tabulate f on the grid, row-major over (i_1, ..., i_dim).
  std::size_t total = 1;
  for (int a = 0; a < dim; ++a) total *= static_cast<std::size_t>(m);
  std::vector<double> data(total);
  Eigen::VectorXd x(dim);
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  for (std::size_t p = 0; p < total; ++p) {
    for (int a = 0; a < dim; ++a) x(a) = rule.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    const double v = f(x);
    if (!std::isfinite(v)) throw NumericalFailure("project: non-finite function value at a quadrature node");
    data[p] = v;
    for (int a = dim - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < m) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }

  // Hw(k, i) = w_i h_k(x_i).
  Eigen::MatrixXd Hw(K, m);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K; ++k)
      Hw(k, i) = rule.weights[static_cast<std::size_t>(i)] * hermite_value(k, rule.nodes[static_cast<std::size_t>(i)]);

  // Contract the leading axis and move the result to the back; after dim passes the axes are
  // back in order and each has length K.
  std::size_t rest = total / static_cast<std::size_t>(m);
  for (int a = 0; a < dim; ++a) {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> in(data.data(), m, static_cast<Eigen::Index>(rest));
    RowMat contracted = Hw * in;  // K x rest
    std::vector<double> next(static_cast<std::size_t>(K) * rest);
    Eigen::Map<RowMat>(next.data(), static_cast<Eigen::Index>(rest), K) = contracted.transpose();
    data.swap(next);
    rest = data.size() / static_cast<std::size_t>(m);
  }

  HermiteSpectrum s{dim, max_degree, {}};
  MultiIndex alpha(static_cast<std::size_t>(dim), 0);
  for (std::size_t p = 0; p < data.size(); ++p) {
    if (total_degree(alpha) <= max_degree) s.coeffs[alpha] = data[p];
    for (int a = dim - 1; a >= 0; --a) {
      if (++alpha[static_cast<std::size_t>(a)] < K) break;
      alpha[static_cast<std::size_t>(a)] = 0;
    }
  }
  return s;
}

/// Stab_rho(f) = sum over stored alpha of rho^|alpha| ftilde(alpha)^2, rho in [0, 1].
inline double spectral_stability(const HermiteSpectrum& s, double rho) {
  detail::require(rho >= 0.0 && rho <= 1.0, "spectral stability: rho must lie in [0, 1]");
  double acc = 0.0;
  for (const auto& [a, c] : s.coeffs) acc += std::pow(rho, total_degree(a)) * c * c;
  return acc;
}

/// Smallest real T for which Stab_rho(f) >= (1 - delta) ||f||^2 forces tail mass at degrees >= T
/// below epsilon ||f||^2: T = log(1 - delta/epsilon) / log(rho).
inline double tail_threshold(double rho, double delta, double epsilon) {
  detail::require(rho > 0.0 && rho < 1.0, "tail threshold: rho must lie in (0, 1)");
  detail::require(epsilon > 0.0 && epsilon < 1.0, "tail threshold: epsilon must lie in (0, 1)");
  detail::require(delta >= 0.0, "tail threshold: delta must be >= 0");
  if (delta >= epsilon) throw InvalidArgument("tail threshold: delta must be < epsilon (bound undefined)");
  return std::log1p(-delta / epsilon) / std::log(rho);
}

struct ConcentrationReport {
  double rho = 0.0;
  double delta = 0.0;    // 1 - Stab_rho(f) / ||f||^2
  double epsilon = 0.0;
  double threshold_T = 0.0;
  int cutoff = 0;        // degree from which the tail is summed
  double norm_sq = 0.0;
  double tail_mass = 0.0;   // sum of W^k for k >= cutoff
  double chain_bound = 0.0; // delta ||f||^2 / (1 - rho^cutoff)
  bool applicable = false;  // delta < epsilon
  bool holds = true;        // tail_mass <= epsilon ||f||^2 (vacuous when not applicable)
};

/// Checks the stability-implies-concentration bound on an explicit spectrum.
inline ConcentrationReport verify_tail_bound(const HermiteSpectrum& s, double rho, double epsilon) {
  detail::require(rho > 0.0 && rho < 1.0, "verify tail bound: rho must lie in (0, 1)");
  detail::require(epsilon > 0.0 && epsilon < 1.0, "verify tail bound: epsilon must lie in (0, 1)");
  ConcentrationReport r;
  r.rho = rho;
  r.epsilon = epsilon;
  r.norm_sq = s.norm_sq();
  detail::require(r.norm_sq > 0.0, "verify tail bound: zero function");
  r.delta = std::max(0.0, 1.0 - spectral_stability(s, rho) / r.norm_sq);
  r.applicable = r.delta < epsilon;
  if (!r.applicable) return r;
  r.threshold_T = tail_threshold(rho, r.delta, epsilon);
  r.cutoff = std::max(1, static_cast<int>(std::ceil(r.threshold_T)));
  const std::vector<double> w = s.level_weights();
  for (std::size_t k = static_cast<std::size_t>(r.cutoff); k < w.size(); ++k) r.tail_mass += w[k];
  r.chain_bound = r.delta * r.norm_sq / (1.0 - std::pow(rho, r.cutoff));
  r.holds = r.tail_mass <= epsilon * r.norm_sq * (1.0 + 1e-12);
  return r;
}

/// CSV with columns alpha (dash-separated exponents), coefficient.
inline void write_spectrum_csv(const HermiteSpectrum& s, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"alpha", "coefficient"});
  for (const auto& [a, c] : s.coeffs) {
    std::string key;
    for (std::size_t i = 0; i < a.size(); ++i) key += (i ? "-" : "") + std::to_string(a[i]);
    csv.row({key, io::format_double(c)});
  }
}

/// Random sparse spectrum: dim in [1, max_dim], between 1 and max_terms multi-indices of total
/// degree <= max_degree with standard normal coefficients.
inline HermiteSpectrum random_sparse_spectrum(Rng& rng, int max_dim = 3, int max_degree = 10, int max_terms = 8) {
  detail::require(max_dim >= 1 && max_degree >= 0 && max_terms >= 1, "random spectrum: bad limits");
  HermiteSpectrum s;
  s.dim = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_dim)));
  s.max_degree = max_degree;
  const int terms = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_terms)));
  for (int t = 0; t < terms; ++t) {
    const int deg = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_degree) + 1));
    MultiIndex a(static_cast<std::size_t>(s.dim), 0);
    for (int u = 0; u < deg; ++u) ++a[rng.uniform_int(static_cast<std::uint64_t>(s.dim))];
    s.coeffs[a] = rng.normal();
  }
  return s;
}

}  // namespace nstab
