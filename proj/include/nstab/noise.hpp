#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nstab/error.hpp"
#include "nstab/rng.hpp"
#include "nstab/types.hpp"

namespace nstab {

// Every sampler owns one stream family; call number c draws from substream c, so a given
// (seed, call) pair always yields the same output. clone_with() hands a fresh family to a worker.

/// rho-correlated standard Gaussian pairs: Y = rho X + sqrt(1 - rho^2) Z.
class GaussianPairSampler {
 public:
  GaussianPairSampler(double rho, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
      : rho_(rho), rows_(rows), cols_(cols), seed_(seed) {
    detail::require(std::abs(rho) <= 1.0, "gaussian pair: |rho| must be <= 1");
    detail::require(rows >= 1 && cols >= 1, "gaussian pair: empty shape");
  }

  double rho() const { return rho_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t calls() const { return calls_; }

  std::pair<Matrix, Matrix> sample() {
    Rng rng = Rng::substream(seed_, calls_++);
    Matrix x(rows_, cols_), y(rows_, cols_);
    fill(rng, x, y);
    return {std::move(x), std::move(y)};
  }

  /// Fills x and y in place from the stream of call number `call` without advancing the counter.
  void sample_at(std::uint64_t call, Matrix& x, Matrix& y) const {
    Rng rng = Rng::substream(seed_, call);
    x.resize(rows_, cols_);
    y.resize(rows_, cols_);
    fill(rng, x, y);
  }

  GaussianPairSampler clone_with(std::uint64_t worker) const {
    return GaussianPairSampler(rho_, rows_, cols_, derive_seed(seed_, ~worker));
  }

 private:
  void fill(Rng& rng, Matrix& x, Matrix& y) const {
    const double c = std::sqrt(std::max(0.0, 1.0 - rho_ * rho_));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double xv = rng.normal();
      const double z = rng.normal();
      x.data()[i] = xv;
      y.data()[i] = rho_ == 1.0 ? xv : rho_ * xv + c * z;
    }
  }

  double rho_;
  Eigen::Index rows_, cols_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

/// Token resampling noise: each position is kept with probability (1 + rho) / 2 and otherwise
/// replaced by a uniform draw from [0, vocab).
class TokenNoiseSampler {
 public:
  TokenNoiseSampler(double rho, int vocab, std::uint64_t seed) : rho_(rho), vocab_(vocab), seed_(seed) {
    detail::require(std::abs(rho) <= 1.0, "token noise: |rho| must be <= 1");
    detail::require(vocab >= 1, "token noise: vocabulary must be non-empty");
  }

  double rho() const { return rho_; }
  int vocab() const { return vocab_; }
  double keep_probability() const { return (1.0 + rho_) / 2.0; }
  std::uint64_t calls() const { return calls_; }

  std::vector<int> sample(std::span<const int> x) {
    for (int t : x) {
      if (t < 0 || t >= vocab_) {
        throw InvalidArgument("token noise: token " + std::to_string(t) + " outside vocabulary of " +
                              std::to_string(vocab_));
      }
    }
    Rng rng = Rng::substream(seed_, calls_++);
    const double keep = keep_probability();
    std::vector<int> y(x.begin(), x.end());
    for (auto& t : y) {
      if (!(rng.uniform() < keep)) t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab_)));
    }
    return y;
  }

  TokenNoiseSampler clone_with(std::uint64_t worker) const {
    return TokenNoiseSampler(rho_, vocab_, derive_seed(seed_, ~worker));
  }

 private:
  double rho_;
  int vocab_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

/// Scaled Bonami-Beckner noise: Y_ij = alpha X_ij with probability rho_ij, otherwise a fresh
/// N(mu_ij, sigma_ij^2) draw independent of X.
class BonamiBecknerSampler {
 public:
  BonamiBecknerSampler(Matrix keep, double alpha, Matrix mu, Matrix sigma, std::uint64_t seed)
      : keep_(std::move(keep)), mu_(std::move(mu)), sigma_(std::move(sigma)), alpha_(alpha), seed_(seed) {
    detail::require(alpha > 0.0, "bonami-beckner: alpha must be > 0");
    detail::require(keep_.rows() == mu_.rows() && keep_.cols() == mu_.cols() && mu_.rows() == sigma_.rows() &&
                        mu_.cols() == sigma_.cols(),
                    "bonami-beckner: parameter shapes differ");
    detail::require((keep_.array() >= 0.0).all() && (keep_.array() <= 1.0).all(),
                    "bonami-beckner: keep probabilities must lie in [0, 1]");
    detail::require((sigma_.array() >= 0.0).all(), "bonami-beckner: sigma must be >= 0");
  }

  double alpha() const { return alpha_; }

  Matrix sample(const Matrix& x) {
    detail::require(x.rows() == keep_.rows() && x.cols() == keep_.cols(), "bonami-beckner: input shape");
    Rng rng = Rng::substream(seed_, calls_++);
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const bool keep = rng.uniform() < keep_.data()[i];
      const double fresh = rng.normal(mu_.data()[i], sigma_.data()[i]);
      y.data()[i] = keep ? alpha_ * x.data()[i] : fresh;
    }
    return y;
  }

 private:
  Matrix keep_, mu_, sigma_;
  double alpha_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

}  // namespace nstab
