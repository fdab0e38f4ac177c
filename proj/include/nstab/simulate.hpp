#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nstab/error.hpp"
#include "nstab/noise.hpp"
#include "nstab/rng.hpp"
#include "nstab/stability_mc.hpp"
#include "nstab/tinynn/ops.hpp"
#include "nstab/types.hpp"

namespace nstab {

/// Single attention layer f(X) = softmax(scale * X W X^T) X W_V with W = W_Q W_K^T given either
/// as the identity, as a low-rank factor (W = U U^T) or densely.
class AttentionLayer {
 public:
  enum class Kind { identity, low_rank, dense };

  static AttentionLayer identity(Matrix w_v, double score_scale = 1.0) {
    return AttentionLayer(Kind::identity, Matrix(), std::move(w_v), score_scale);
  }
  static AttentionLayer low_rank(Matrix u, Matrix w_v, double score_scale = 1.0) {
    detail::require(u.rows() == w_v.rows(), "attention: U must have d rows");
    return AttentionLayer(Kind::low_rank, std::move(u), std::move(w_v), score_scale);
  }
  static AttentionLayer dense(Matrix w, Matrix w_v, double score_scale = 1.0) {
    detail::require(w.rows() == w_v.rows() && w.cols() == w_v.rows(), "attention: W must be d x d");
    return AttentionLayer(Kind::dense, std::move(w), std::move(w_v), score_scale);
  }

  Kind kind() const { return kind_; }
  Eigen::Index dim() const { return w_v_.rows(); }

  /// Row i of the attention matrix.
  Eigen::RowVectorXd attention_row(const Matrix& x, Eigen::Index i) const {
    check(x);
    Eigen::VectorXd scores;
    switch (kind_) {
      case Kind::identity:
        scores = x * x.row(i).transpose();
        break;
      case Kind::low_rank: {
        const Matrix proj = x * w_;
        scores = proj * proj.row(i).transpose();
        break;
      }
      case Kind::dense:
        scores = x * (w_.transpose() * x.row(i).transpose());
        break;
    }
    scores *= score_scale_;
    const double m = scores.maxCoeff();
    Eigen::RowVectorXd p = (scores.array() - m).exp().transpose();
    return p / p.sum();
  }

  Matrix attention(const Matrix& x) const {
    Matrix a(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) a.row(i) = attention_row(x, i);
    return a;
  }

  Matrix operator()(const Matrix& x) const { return attention(x) * (x * w_v_); }

  double entry(const Matrix& x, Eigen::Index i, Eigen::Index j) const {
    detail::require(i >= 0 && i < x.rows() && j >= 0 && j < w_v_.cols(), "attention: entry outside output shape");
    return attention_row(x, i).dot(x * w_v_.col(j));
  }

 private:
  AttentionLayer(Kind kind, Matrix w, Matrix w_v, double score_scale)
      : kind_(kind), w_(std::move(w)), w_v_(std::move(w_v)), score_scale_(score_scale) {
    detail::require(w_v_.rows() >= 1 && w_v_.cols() >= 1, "attention: empty value matrix");
  }

  void check(const Matrix& x) const {
    detail::require(x.cols() == w_v_.rows(), "attention: input width differs from d");
  }

  Kind kind_;
  Matrix w_, w_v_;
  double score_scale_;
};

/// X -> X W_V, the large-d limit of identity-structured attention.
struct LinearMap {
  Matrix w_v;
  Matrix operator()(const Matrix& x) const { return x * w_v; }
  double entry(const Matrix& x, Eigen::Index i, Eigen::Index j) const { return x.row(i).dot(w_v.col(j)); }
};

/// E[f(X)_ij f(Y)_ij] for attention with W_V = I and a fresh d x d standard Gaussian W per
/// trial, at entry (0, 0). W enters row 0 of the scores only through (W^T x_0, W^T y_0), which
/// is sampled exactly given X and Y, so a trial costs O(n d).
inline StabilityEstimate estimate_unstructured_attention_stability(Eigen::Index n, Eigen::Index d, double rho,
                                                                   std::uint64_t n_trials, std::uint64_t seed,
                                                                   double score_scale = 1.0) {
  detail::require(n >= 1 && d >= 1, "unstructured attention: empty shape");
  GaussianPairSampler sampler(rho, n, d, seed);
  Eigen::VectorXd g(d), h(d);
  Welford w = detail::run_pair_blocks(sampler, n_trials, kDefaultBlockSize,
                                      [&](const Matrix& x, const Matrix& y, std::uint64_t s, Rng& rng) {
                                        const double xx = x.row(0).squaredNorm();
                                        const double xy = x.row(0).dot(y.row(0));
                                        const double yy = y.row(0).squaredNorm();
                                        const double sx = std::sqrt(xx), beta = xy / sx;
                                        const double resid = rho == 1.0 ? 0.0 : std::sqrt(std::max(0.0, yy - beta * beta));
                                        for (Eigen::Index a = 0; a < d; ++a) {
                                          const double z1 = rng.normal(), z2 = rng.normal();
                                          g(a) = sx * z1;
                                          h(a) = beta * z1 + resid * z2;
                                        }
                                        auto soft = [score_scale](Eigen::VectorXd s) {
                                          s *= score_scale;
                                          s = (s.array() - s.maxCoeff()).exp();
                                          return Eigen::VectorXd(s / s.sum());
                                        };
                                        const Eigen::VectorXd ax = soft(x * g), ay = soft(y * h);
                                        const double v = ax.dot(x.col(0)) * ay.dot(y.col(0));
                                        detail::check_finite(v, s, "unstructured attention");
                                        return v;
                                      });
  return w.estimate(rho);
}

/// Stability of a stack of attention blocks Y -> ReLU(softmax(scale * Y Y^T) Y W_V) with
/// W_V = gamma I. Entry l of the result is the mean over output entries of
/// E[f_l(X)_ij f_l(Y)_ij] after l + 1 blocks, for rho-correlated standard Gaussian n x d inputs.
inline std::vector<StabilityEstimate> simulate_attention_stack(Eigen::Index n, Eigen::Index d, double gamma,
                                                               int depth, double rho0, std::uint64_t n_samples,
                                                               std::uint64_t seed, double score_scale = 1.0) {
  detail::require(depth >= 1, "attention stack: depth must be >= 1");
  detail::require(gamma > 0.0, "attention stack: gamma must be > 0");
  GaussianPairSampler sampler(rho0, n, d, seed);
  std::vector<Welford> acc(static_cast<std::size_t>(depth));
  auto block = [&](Matrix& z) {
    Matrix s = (z * z.transpose()) * score_scale;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      s.row(i) = (s.row(i).array() - s.row(i).maxCoeff()).exp();
      s.row(i) /= s.row(i).sum();
    }
    z = ((s * z) * gamma).cwiseMax(0.0);
  };
  detail::run_pair_blocks(sampler, n_samples, kDefaultBlockSize,
                          [&](const Matrix& x0, const Matrix& y0, std::uint64_t s, Rng&) {
                            Matrix x = x0, y = y0;
                            for (int l = 0; l < depth; ++l) {
                              block(x);
                              block(y);
                              const double v = x.cwiseProduct(y).mean();
                              detail::check_finite(v, s, "attention stack");
                              acc[static_cast<std::size_t>(l)].add(v);
                            }
                            return 0.0;
                          });
  std::vector<StabilityEstimate> out;
  for (const auto& w : acc) out.push_back(w.estimate(rho0));
  return out;
}

/// Deep ReLU network in which every layer sees unit-variance pre-activations: layer l computes
/// z = W h / sqrt(width) + sqrt(1 - q) xi with q = |h|^2 / width, W standard Gaussian and xi
/// fresh standard noise per input, then h' = ReLU(z). The pre-activation correlation of the
/// two inputs at layer l is then the previous layer's stability h_x . h_y / width, the setting of
/// the ReLU depth recurrence. Entry l of the result is the stability after l + 1 layers, averaged
/// over `ensembles` independent weight draws.
inline std::vector<StabilityEstimate> simulate_deep_mlp(int width, int depth, double rho0, int ensembles,
                                                        std::uint64_t seed) {
  detail::require(width >= 1 && depth >= 1 && ensembles >= 2, "deep mlp: need width, depth >= 1, ensembles >= 2");
  detail::require(rho0 >= -1.0 && rho0 <= 1.0, "deep mlp: rho0 must lie in [-1, 1]");
  std::vector<Welford> acc(static_cast<std::size_t>(depth));
  const double inv_sqrt_w = 1.0 / std::sqrt(static_cast<double>(width));
  for (int e = 0; e < ensembles; ++e) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(e));
    Eigen::VectorXd hx(width), hy(width);
    const double c = std::sqrt(std::max(0.0, 1.0 - rho0 * rho0));
    for (int a = 0; a < width; ++a) {
      hx(a) = rng.normal();
      hy(a) = rho0 * hx(a) + c * rng.normal();
    }
    Matrix W(width, width);
    for (int l = 0; l < depth; ++l) {
      for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = rng.normal();
      const double qx = hx.squaredNorm() / width, qy = hy.squaredNorm() / width;
      Eigen::VectorXd zx = (W * hx) * inv_sqrt_w, zy = (W * hy) * inv_sqrt_w;
      const double nx = std::sqrt(std::max(0.0, 1.0 - qx)), ny = std::sqrt(std::max(0.0, 1.0 - qy));
      for (int a = 0; a < width; ++a) {
        zx(a) += nx * rng.normal();
        zy(a) += ny * rng.normal();
      }
      hx = zx.cwiseMax(0.0);
      hy = zy.cwiseMax(0.0);
      acc[static_cast<std::size_t>(l)].add(hx.dot(hy) / width);
    }
  }
  std::vector<StabilityEstimate> out;
  for (const auto& w : acc) out.push_back(w.estimate(rho0));
  return out;
}

}  // namespace nstab
