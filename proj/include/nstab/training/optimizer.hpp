#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "nstab/error.hpp"
#include "nstab/tinynn/transformer.hpp"

namespace nstab::train {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamWConfig, lr, weight_decay, beta1, beta2, eps)

/// AdamW with decoupled weight decay, applied to every parameter (torch.optim.AdamW semantics).
class AdamW {
 public:
  AdamW(std::vector<nn::NamedParameter>& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
    detail::require(cfg.lr > 0.0 && cfg.weight_decay >= 0.0 && cfg.eps > 0.0, "adamw: invalid hyperparameters");
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double step_size = cfg_.lr / bc1;
    const double sqrt_bc2 = std::sqrt(bc2);
    for (std::size_t i = 0; i < params_->size(); ++i) {
      nn::Tensor& p = (*params_)[i].tensor;
      Matrix& w = p.mutable_value();
      w *= 1.0 - cfg_.lr * cfg_.weight_decay;
      const Matrix& g = p.grad();
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      w.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() / sqrt_bc2 + cfg_.eps);
    }
  }

 private:
  std::vector<nn::NamedParameter>* params_;
  AdamWConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

struct PlateauConfig {
  int patience = 10;
  double factor = 0.8;
  double min_lr = 1e-6;
  double threshold = 1e-4;  // relative improvement needed to reset patience
  bool enabled = true;      // false keeps the learning rate constant
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PlateauConfig, patience, factor, min_lr, threshold, enabled)

/// Reduce-on-plateau over a minimized metric (torch ReduceLROnPlateau, mode "min", rel threshold).
class PlateauScheduler {
 public:
  explicit PlateauScheduler(PlateauConfig cfg) : cfg_(cfg) {
    detail::require(cfg.factor > 0.0 && cfg.factor < 1.0, "plateau: factor must lie in (0, 1)");
    detail::require(cfg.patience >= 0, "plateau: patience must be >= 0");
  }

  /// Returns the learning rate to use after observing `metric`.
  double step(double metric, double lr) {
    if (!cfg_.enabled) return lr;
    if (metric < best_ * (1.0 - cfg_.threshold)) {
      best_ = metric;
      bad_ = 0;
    } else {
      ++bad_;
    }
    if (bad_ > cfg_.patience) {
      bad_ = 0;
      const double next = std::max(lr * cfg_.factor, cfg_.min_lr);
      if (lr - next > 1e-12) return next;
    }
    return lr;
  }

 private:
  PlateauConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

}  // namespace nstab::train
