#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nstab/closed_forms.hpp"
#include "nstab/error.hpp"
#include "nstab/noise.hpp"
#include "nstab/rng.hpp"
#include "nstab/stability_mc.hpp"
#include "nstab/types.hpp"

namespace nstab {

/// Per-entry Gaussian inputs X_ij ~ N(mu_ij, sigma_ij^2) and Bonami-Beckner noise parameters:
/// Y_ij = alpha X_ij with probability rho_ij, otherwise a fresh draw from the same law.
struct EntryGaussianSpec {
  Matrix mu, sigma, rho;
  double alpha = 1.0;

  void validate() const {
    detail::require(mu.rows() == sigma.rows() && mu.cols() == sigma.cols() && mu.rows() == rho.rows() &&
                        mu.cols() == rho.cols(),
                    "entry spec: mu, sigma and rho shapes differ");
    detail::require((sigma.array() > 0.0).all(), "entry spec: sigma must be > 0");
    detail::require((rho.array() >= 0.0).all() && (rho.array() <= 1.0).all(), "entry spec: rho must lie in [0, 1]");
    detail::require(alpha > 0.0, "entry spec: alpha must be > 0");
  }
};

/// E[ReLU(X) ReLU(Y)] for one entry: rho alpha E[ReLU(X)^2] + (1 - rho) E[ReLU(X)]^2.
inline double mlp_bb_stability(double mu, double sigma, double rho, double alpha) {
  detail::require(sigma > 0.0, "mlp_bb_stability: sigma must be > 0");
  detail::require(alpha > 0.0, "mlp_bb_stability: alpha must be > 0");
  detail::require(rho >= 0.0 && rho <= 1.0, "mlp_bb_stability: rho must lie in [0, 1]");
  const double t = mu / sigma;
  const double second = (mu * mu + sigma * sigma) * normal_cdf(t) + sigma * mu * normal_pdf(t);
  const double first = sigma * normal_pdf(t) + mu * normal_cdf(t);
  return rho * alpha * second + (1.0 - rho) * first * first;
}

inline double mlp_bb_stability(const EntryGaussianSpec& spec, Eigen::Index i, Eigen::Index j) {
  spec.validate();
  detail::require(i >= 0 && j >= 0 && i < spec.mu.rows() && j < spec.mu.cols(), "mlp_bb_stability: entry out of range");
  return mlp_bb_stability(spec.mu(i, j), spec.sigma(i, j), spec.rho(i, j), spec.alpha);
}

struct StabilityInterval {
  double lower = 0.0, upper = 0.0;
  double R_l = 0.0, R_r = 0.0, E = 1.0;
  bool premise_ok = false;
  Eigen::Index bad_j = -1, bad_jp = -1;  // first column pair violating the premise
  double bad_value = 0.0;
};

/// Sum over (a, b) of max(0, x_a y_b).
inline double s_plus(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (Eigen::Index a = 0; a < x.size(); ++a)
    for (Eigen::Index b = 0; b < y.size(); ++b) acc += std::max(0.0, x(a) * y(b));
  return acc;
}

/// Sum over (a, b) of min(0, x_a y_b).
inline double s_minus(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (Eigen::Index a = 0; a < x.size(); ++a)
    for (Eigen::Index b = 0; b < y.size(); ++b) acc += std::min(0.0, x(a) * y(b));
  return acc;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// Bounds on E[A(X)_ij A(Y)_i'j'] for an attention layer whose inputs have all cross-moments
/// E[X_kl Y_k'l'] in [rho_l, rho_r] and entries bounded by B. Reports premise_ok = false instead
/// of throwing; see attention_interval for the checked version.
inline StabilityInterval attention_interval_report(double rho_l, double rho_r, double B, const Matrix& W_K,
                                                   const Matrix& W_Q, const Matrix& W_V, Eigen::Index n) {
  detail::require(rho_l > 0.0 && rho_l <= rho_r, "attention interval: need 0 < rho_l <= rho_r");
  detail::require(B >= 0.0, "attention interval: B must be >= 0");
  detail::require(n >= 1, "attention interval: n must be >= 1");
  const Eigen::Index d = W_V.rows();
  detail::require(d >= 1 && W_V.cols() == d && W_K.rows() == d && W_K.cols() == d && W_Q.rows() == d &&
                      W_Q.cols() == d,
                  "attention interval: weights must all be d x d");
  StabilityInterval r;
  r.R_l = std::numeric_limits<double>::infinity();
  r.R_r = -std::numeric_limits<double>::infinity();
  r.premise_ok = true;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index jp = 0; jp < d; ++jp) {
      const Eigen::VectorXd wj = W_V.col(j), wjp = W_V.col(jp);
      const double sp = s_plus(wj, wjp), sm = s_minus(wj, wjp);
      const double lo = rho_l * sp + rho_r * sm;
      if (!(lo > 0.0) && r.premise_ok) {
        r.premise_ok = false;
        r.bad_j = j;
        r.bad_jp = jp;
        r.bad_value = lo;
      }
      r.R_l = std::min(r.R_l, lo);
      r.R_r = std::max(r.R_r, rho_r * sp);
    }
  }
  const double dd = static_cast<double>(d);
  r.E = std::exp(4.0 * dd * dd * B * B * max_abs(W_K) * max_abs(W_Q));
  r.lower = r.R_l / r.E;
  r.upper = r.R_r * r.E;
  return r;
}

inline StabilityInterval attention_interval(double rho_l, double rho_r, double B, const Matrix& W_K,
                                            const Matrix& W_Q, const Matrix& W_V, Eigen::Index n) {
  StabilityInterval r = attention_interval_report(rho_l, rho_r, B, W_K, W_Q, W_V, n);
  if (!r.premise_ok) {
    throw PremiseFailure("attention interval: positivity premise fails for value columns (j, j') = (" +
                         std::to_string(r.bad_j) + ", " + std::to_string(r.bad_jp) +
                         ") (0-based): rho_l S+ + rho_r S- = " + std::to_string(r.bad_value) + " <= 0");
  }
  return r;
}

/// MC estimate of E[ReLU(X) ReLU(Y)] with X ~ N(mu, sigma^2) and Y scaled Bonami-Beckner noise
/// of X, drawn in blocks of `block` independent entries.
inline StabilityEstimate estimate_mlp_bb_stability(double mu, double sigma, double rho, double alpha,
                                                   std::uint64_t n_samples, std::uint64_t seed,
                                                   Eigen::Index block = 4096) {
  detail::require(n_samples >= 2, "mlp bb estimate: need at least 2 samples");
  const Matrix keep = Matrix::Constant(1, block, rho), m = Matrix::Constant(1, block, mu),
               s = Matrix::Constant(1, block, sigma);
  BonamiBecknerSampler noise(keep, alpha, m, s, derive_seed(seed, 1));
  Rng rng = Rng::substream(seed, 0);
  Welford w;
  Matrix x(1, block);
  for (std::uint64_t done = 0; done < n_samples;) {
    for (Eigen::Index k = 0; k < block; ++k) x(0, k) = rng.normal(mu, sigma);
    const Matrix y = noise.sample(x);
    for (Eigen::Index k = 0; k < block && done < n_samples; ++k, ++done)
      w.add(std::max(0.0, x(0, k)) * std::max(0.0, y(0, k)));
  }
  return w.estimate(rho);
}

/// A premise-satisfying attention-interval instance with a concrete input law: entries
/// X_kl = clip(mu + sigma Z_kl, -B, B) i.i.d., Y the same map of rho Z + sqrt(1 - rho^2) Z'.
/// Distinct entries then have cross-moment m^2 (m the clipped mean) and equal entries a larger
/// value; the band [rho_l, rho_r] covers both.
struct IntervalInstance {
  Eigen::Index n = 2, d = 2;
  double B = 1.0, mu = 0.5, sigma = 0.5, rho = 0.5;
  double rho_l = 0.0, rho_r = 0.0;
  Matrix W_K, W_Q, W_V;
  Eigen::Index i = 0, j = 0, ip = 0, jp = 0;  // cross-moment entry (i, j) vs (i', j')
};

/// E[clip(mu + sigma Z, -B, B)].
inline double clipped_normal_mean(double mu, double sigma, double B) {
  const double a = (-B - mu) / sigma, b = (B - mu) / sigma;
  return -B * normal_cdf(a) + B * (1.0 - normal_cdf(b)) + mu * (normal_cdf(b) - normal_cdf(a)) +
         sigma * (normal_pdf(a) - normal_pdf(b));
}

namespace detail {
inline Matrix clipped_pair_entries(Rng& rng, Eigen::Index n, Eigen::Index d, const IntervalInstance& inst,
                                   Matrix& y) {
  Matrix x(n, d);
  y.resize(n, d);
  const double c = std::sqrt(std::max(0.0, 1.0 - inst.rho * inst.rho));
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double z = rng.normal(), zy = inst.rho * z + c * rng.normal();
    x.data()[k] = std::clamp(inst.mu + inst.sigma * z, -inst.B, inst.B);
    y.data()[k] = std::clamp(inst.mu + inst.sigma * zy, -inst.B, inst.B);
  }
  return x;
}
}  // namespace detail

/// Random instance with d, n <= 4 and B <= 1. The equal-entry cross-moment is measured on a pilot
/// sample of `pilot` scalar pairs and rho_r is set 4 standard errors above it; rho_l = m^2 is exact.
/// W_V is redrawn until the positivity premise holds.
inline IntervalInstance random_interval_instance(Rng& rng, std::uint64_t pilot = 200000) {
  IntervalInstance inst;
  inst.n = 1 + static_cast<Eigen::Index>(rng.uniform_int(4));
  inst.d = 1 + static_cast<Eigen::Index>(rng.uniform_int(4));
  inst.B = rng.uniform(0.3, 1.0);
  inst.mu = rng.uniform(0.3, 1.0) * inst.B;
  inst.sigma = rng.uniform(0.2, 1.0);
  inst.rho = rng.uniform(0.0, 1.0);
  const double m = clipped_normal_mean(inst.mu, inst.sigma, inst.B);
  inst.rho_l = m * m;
  Welford same;
  IntervalInstance one = inst;
  for (std::uint64_t s = 0; s < pilot; ++s) {
    Matrix y;
    const Matrix x = detail::clipped_pair_entries(rng, 1, 1, one, y);
    same.add(x(0, 0) * y(0, 0));
  }
  inst.rho_r = std::max(inst.rho_l, same.mean() + 4.0 * same.std_error());
  const double wk = rng.uniform(0.0, 0.5), wq = rng.uniform(0.0, 0.5);
  auto uniform_matrix = [&](double lo, double hi) {
    Matrix w(inst.d, inst.d);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = rng.uniform(lo, hi);
    return w;
  };
  inst.W_K = uniform_matrix(-wk, wk);
  inst.W_Q = uniform_matrix(-wq, wq);
  do {
    inst.W_V = uniform_matrix(-0.3, 1.0);
  } while (!attention_interval_report(inst.rho_l, inst.rho_r, inst.B, inst.W_K, inst.W_Q, inst.W_V, inst.n)
                .premise_ok);
  inst.i = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(inst.n)));
  inst.ip = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(inst.n)));
  inst.j = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(inst.d)));
  inst.jp = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(inst.d)));
  return inst;
}

inline StabilityInterval interval_for(const IntervalInstance& inst) {
  return attention_interval(inst.rho_l, inst.rho_r, inst.B, inst.W_K, inst.W_Q, inst.W_V, inst.n);
}

/// MC estimate of E[A(X)_ij A(Y)_i'j'] with A(X) = softmax(X W_Q W_K^T X^T) X W_V.
inline StabilityEstimate estimate_attention_cross_moment(const IntervalInstance& inst, std::uint64_t n_samples,
                                                         std::uint64_t seed) {
  detail::require(n_samples >= 2, "cross moment: need at least 2 samples");
  const Matrix M = inst.W_Q * inst.W_K.transpose();
  auto layer = [&](const Matrix& x) {
    Matrix s = x * M * x.transpose();
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
      s.row(r) /= s.row(r).sum();
    }
    return Matrix(s * (x * inst.W_V));
  };
  Rng rng = Rng::substream(seed, 0);
  Welford w;
  for (std::uint64_t s = 0; s < n_samples; ++s) {
    Matrix y;
    const Matrix x = detail::clipped_pair_entries(rng, inst.n, inst.d, inst, y);
    w.add(layer(x)(inst.i, inst.j) * layer(y)(inst.ip, inst.jp));
  }
  return w.estimate(inst.rho);
}

}  // namespace nstab
