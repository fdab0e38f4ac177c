#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <utility>

#include "nstab/error.hpp"
#include "nstab/noise.hpp"
#include "nstab/rng.hpp"
#include "nstab/types.hpp"

namespace nstab {

struct StabilityEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  double rho = 0.0;
};

/// Streaming mean/variance (Welford), mergeable in a fixed order (Chan et al.).
class Welford {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  void merge(const Welford& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double delta = o.mean_ - mean_;
    mean_ += delta * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

  StabilityEstimate estimate(double rho) const { return {mean_, std_error(), n_, rho}; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline constexpr std::uint64_t kDefaultBlockSize = 4096;

namespace detail {

inline constexpr std::uint64_t kMcFamily = 0x4D43'5354'4142ull;

inline void check_finite(double v, std::uint64_t sample, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalFailure(std::string(what) + ": non-finite function value at sample " + std::to_string(sample));
  }
}

/// Runs `body(x, y, sample_index, rng)` for n samples, in blocks with one substream per block,
/// merging per-block accumulators in block order.
template <class Body>
Welford run_pair_blocks(const GaussianPairSampler& sampler, std::uint64_t n_samples, std::uint64_t block_size,
                        Body&& body) {
  detail::require(n_samples >= 2, "stability estimate needs at least 2 samples");
  detail::require(block_size >= 1, "block size must be positive");
  const double rho = sampler.rho();
  const double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const std::uint64_t family = derive_seed(sampler.seed(), kMcFamily);
  Matrix x(sampler.rows(), sampler.cols()), y(sampler.rows(), sampler.cols());
  Welford total;
  for (std::uint64_t start = 0, block = 0; start < n_samples; start += block_size, ++block) {
    Rng rng = Rng::substream(family, block);
    Welford acc;
    const std::uint64_t end = std::min(n_samples, start + block_size);
    for (std::uint64_t s = start; s < end; ++s) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double xv = rng.normal();
        const double z = rng.normal();
        x.data()[i] = xv;
        y.data()[i] = rho == 1.0 ? xv : rho * xv + c * z;
      }
      acc.add(body(x, y, s, rng));
    }
    total.merge(acc);
  }
  return total;
}

}  // namespace detail

/// Monte Carlo estimate of Stab_rho(f) = E[f(X) f(Y)] for a scalar functional f of the sampler's
/// matrix-shaped input.
template <class F>
  requires std::invocable<F&, const Matrix&>
StabilityEstimate estimate_stability(F&& f, const GaussianPairSampler& sampler, std::uint64_t n_samples,
                                     std::uint64_t block_size = kDefaultBlockSize) {
  Welford w = detail::run_pair_blocks(sampler, n_samples, block_size,
                                      [&](const Matrix& x, const Matrix& y, std::uint64_t s, Rng&) {
                                        const double fx = f(x), fy = f(y);
                                        detail::check_finite(fx, s, "estimate_stability");
                                        detail::check_finite(fy, s, "estimate_stability");
                                        return fx * fy;
                                      });
  return w.estimate(sampler.rho());
}

/// E[f(X)^2] over the X half of the same sample stream.
template <class F>
StabilityEstimate estimate_second_moment(F&& f, const GaussianPairSampler& sampler, std::uint64_t n_samples,
                                         std::uint64_t block_size = kDefaultBlockSize) {
  Welford w = detail::run_pair_blocks(sampler, n_samples, block_size,
                                      [&](const Matrix& x, const Matrix&, std::uint64_t s, Rng&) {
                                        const double fx = f(x);
                                        detail::check_finite(fx, s, "estimate_second_moment");
                                        return fx * fx;
                                      });
  return w.estimate(1.0);
}

/// Matrix-valued maps may expose entry(X, i, j) to skip computing the full output.
template <class F>
concept EntryEvaluable = requires(const F& f, const Matrix& x) {
  { f.entry(x, Eigen::Index{0}, Eigen::Index{0}) } -> std::convertible_to<double>;
};

template <class F>
double output_entry(const F& f, const Matrix& x, Eigen::Index i, Eigen::Index j) {
  if constexpr (EntryEvaluable<F>) {
    return f.entry(x, i, j);
  } else {
    const Matrix out = f(x);
    detail::require(i >= 0 && j >= 0 && i < out.rows() && j < out.cols(), "entry outside output shape");
    return out(i, j);
  }
}

/// E[f(X)_ij f(Y)_ij] for a matrix-to-matrix map f.
template <class F>
StabilityEstimate estimate_entrywise_stability(const F& f, const GaussianPairSampler& sampler,
                                               std::uint64_t n_samples, Eigen::Index i, Eigen::Index j,
                                               std::uint64_t block_size = kDefaultBlockSize) {
  detail::require(i >= 0 && j >= 0, "entry indices must be non-negative");
  Welford w = detail::run_pair_blocks(sampler, n_samples, block_size,
                                      [&](const Matrix& x, const Matrix& y, std::uint64_t s, Rng&) {
                                        const double fx = output_entry(f, x, i, j);
                                        const double fy = output_entry(f, y, i, j);
                                        detail::check_finite(fx, s, "estimate_entrywise_stability");
                                        detail::check_finite(fy, s, "estimate_entrywise_stability");
                                        return fx * fy;
                                      });
  return w.estimate(sampler.rho());
}

/// Paired comparison of two maps on one sample stream: estimates of E[f f'], E[g g'] and of
/// their difference, whose standard error reflects only the part where f and g disagree.
struct PairedEstimate {
  StabilityEstimate first, second, difference;
};

template <class F, class G>
PairedEstimate estimate_paired_entrywise(const F& f, const G& g, const GaussianPairSampler& sampler,
                                         std::uint64_t n_samples, Eigen::Index i, Eigen::Index j,
                                         std::uint64_t block_size = kDefaultBlockSize) {
  Welford wf, wg, wd;
  detail::run_pair_blocks(sampler, n_samples, block_size, [&](const Matrix& x, const Matrix& y, std::uint64_t s, Rng&) {
    const double a = output_entry(f, x, i, j) * output_entry(f, y, i, j);
    const double b = output_entry(g, x, i, j) * output_entry(g, y, i, j);
    detail::check_finite(a, s, "estimate_paired_entrywise");
    detail::check_finite(b, s, "estimate_paired_entrywise");
    wf.add(a);
    wg.add(b);
    wd.add(a - b);
    return 0.0;
  });
  return {wf.estimate(sampler.rho()), wg.estimate(sampler.rho()), wd.estimate(sampler.rho())};
}

/// Fraction of trials in which row 0 of the attention scores X W X^T and Y W Y^T select the same
/// argmax column, with X, Y rho-correlated n x d standard Gaussian and W a fresh d x d standard
/// Gaussian matrix per trial.
///
/// Only u = W^T x_0 and v = W^T y_0 enter the scores. Given X and Y, (u, v) is an exact
/// Gaussian pair: coordinates independent, Var u_a = |x_0|^2, Var v_a = |y_0|^2,
/// Cov(u_a, v_a) = <x_0, y_0>. Sampling (u, v) directly costs O(n d) per trial instead of O(d^2).
inline StabilityEstimate estimate_pattern_agreement(Eigen::Index n, Eigen::Index d, double rho,
                                                    std::uint64_t n_trials, std::uint64_t seed,
                                                    std::uint64_t block_size = kDefaultBlockSize) {
  detail::require(n >= 2, "pattern agreement needs n >= 2");
  detail::require(d >= 1, "pattern agreement needs d >= 1");
  GaussianPairSampler sampler(rho, n, d, seed);
  Eigen::VectorXd u(d), v(d);
  Welford w = detail::run_pair_blocks(sampler, n_trials, block_size,
                                      [&](const Matrix& x, const Matrix& y, std::uint64_t, Rng& rng) {
                                        const double xx = x.row(0).squaredNorm();
                                        const double yy = y.row(0).squaredNorm();
                                        const double xy = x.row(0).dot(y.row(0));
                                        const double sx = std::sqrt(xx);
                                        const double beta = xy / sx;
                                        const double resid = rho == 1.0 ? 0.0 : std::sqrt(std::max(0.0, yy - beta * beta));
                                        for (Eigen::Index a = 0; a < d; ++a) {
                                          const double z1 = rng.normal(), z2 = rng.normal();
                                          u(a) = sx * z1;
                                          v(a) = beta * z1 + resid * z2;
                                        }
                                        Eigen::Index kx = 0, ky = 0;
                                        (x * u).maxCoeff(&kx);
                                        (y * v).maxCoeff(&ky);
                                        return kx == ky ? 1.0 : 0.0;
                                      });
  return w.estimate(rho);
}

}  // namespace nstab
