#pragma once

#include <json.hpp>

#include "nstab/error.hpp"
#include "nstab/noise.hpp"
#include "nstab/tinynn/transformer.hpp"

namespace nstab::train {

struct RegularizerConfig {
  int S = 1;  // orientation: 1 rewards stability, 0 penalizes it
  double rho = 0.25;
  double gamma = 0.75;

  void validate() const {
    detail::require(S == 0 || S == 1, "regularizer: S must be 0 or 1");
    detail::require(rho >= -1.0 && rho <= 1.0, "regularizer: rho must lie in [-1, 1]");
    detail::require(gamma >= 0.0, "regularizer: gamma must be >= 0");
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RegularizerConfig, S, rho, gamma)

/// Batch mean of (-1)^S <p_x, p_y> for row-wise probability matrices.
inline nn::Tensor regularizer_from_probabilities(const nn::Tensor& px, const nn::Tensor& py, int S) {
  detail::require(px.rows() == py.rows() && px.cols() == py.cols(), "regularizer: probability shapes differ");
  const double sign = S == 1 ? -1.0 : 1.0;
  return nn::scale(nn::sum(nn::mul(px, py)), sign / static_cast<double>(px.rows()));
}

/// Regularizer on a token batch with one noisy copy per example. Both forward passes are
/// differentiable; `opt` controls dropout for both.
inline nn::Tensor regularizer_value(const nn::Transformer& model, const nn::TokenBatch& x,
                                    const RegularizerConfig& cfg, TokenNoiseSampler& noise,
                                    const nn::ForwardOptions& opt = {}) {
  cfg.validate();
  nn::TokenBatch y = x;
  y.ids = noise.sample(x.ids);
  return regularizer_from_probabilities(model.probabilities(x, opt), model.probabilities(y, opt), cfg.S);
}

}  // namespace nstab::train
