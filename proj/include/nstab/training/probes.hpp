#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nstab/noise.hpp"
#include "nstab/rng.hpp"
#include "nstab/stability_mc.hpp"
#include "nstab/tinynn/transformer.hpp"
#include "nstab/training/tasks.hpp"

namespace nstab::train {

struct ProbeReport {
  StabilityEstimate stability;  // E[<M(X), M(Y)>]
  double normalized = 0.0;      // E[<c(X), c(Y)>] / sqrt(E|c(X)|^2 E|c(Y)|^2), c = M - 1/C
};

/// Token-noise stability of a classifier with X drawn uniformly from `inputs` and Y its
/// rho-noisy copy, evaluated in eval mode. The normalized value is the same stability for the
/// centered output c = M - 1/C scaled by its second moments: near 1 for a model whose output
/// barely depends on the input, rho'^k for a confident k-sparse parity with per-bit correlation rho'.
inline ProbeReport probe_report(const nn::Transformer& model, const Dataset& inputs, double rho,
                                std::uint64_t n_samples, std::uint64_t seed, std::size_t chunk = 256) {
  detail::require(inputs.size() >= 1, "stability probe: no inputs");
  detail::require(n_samples >= 2, "stability probe: needs at least 2 samples");
  Rng pick = Rng::substream(seed, 0);
  TokenNoiseSampler noise(rho, model.config().vocab_size, derive_seed(seed, 1));
  Welford acc;
  double cross = 0.0, sx = 0.0, sy = 0.0;
  std::vector<std::size_t> rows;
  for (std::uint64_t done = 0; done < n_samples;) {
    const std::size_t m = static_cast<std::size_t>(std::min<std::uint64_t>(chunk, n_samples - done));
    rows.resize(m);
    for (auto& r : rows) r = static_cast<std::size_t>(pick.uniform_int(inputs.size()));
    nn::TokenBatch x = inputs.batch(rows);
    nn::TokenBatch y = x;
    y.ids = noise.sample(x.ids);
    const Matrix px = model.predict_proba(x), py = model.predict_proba(y);
    const double uniform = 1.0 / static_cast<double>(px.cols());
    const Matrix cx = px.array() - uniform, cy = py.array() - uniform;
    for (Eigen::Index i = 0; i < px.rows(); ++i) {
      acc.add(px.row(i).dot(py.row(i)));
      cross += cx.row(i).dot(cy.row(i));
      sx += cx.row(i).squaredNorm();
      sy += cy.row(i).squaredNorm();
    }
    done += m;
  }
  ProbeReport out;
  out.stability = acc.estimate(rho);
  out.normalized = sx > 0.0 && sy > 0.0 ? cross / std::sqrt(sx * sy) : 1.0;
  return out;
}

inline StabilityEstimate stability_probe(const nn::Transformer& model, const Dataset& inputs, double rho,
                                         std::uint64_t n_samples, std::uint64_t seed,
                                         std::size_t chunk = 256) {
  return probe_report(model, inputs, rho, n_samples, seed, chunk).stability;
}

struct InfluenceReport {
  std::vector<double> per_coordinate;
  double total = 0.0;
};

/// Geometric influence of a scalar function on R^n: mean |d f / d x_i| over the rows of
/// `inputs`, with gradients from reverse mode. `f` maps a 1 x n tensor to a scalar tensor.
inline InfluenceReport geometric_influence(const std::function<nn::Tensor(const nn::Tensor&)>& f,
                                           const Matrix& inputs) {
  detail::require(inputs.rows() >= 1 && inputs.cols() >= 1, "geometric influence: empty inputs");
  InfluenceReport out;
  out.per_coordinate.assign(static_cast<std::size_t>(inputs.cols()), 0.0);
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    nn::Tensor x = nn::Tensor::parameter(inputs.row(r));
    nn::Tensor y = f(x);
    y.backward();
    for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
      out.per_coordinate[static_cast<std::size_t>(i)] += std::abs(x.grad()(0, i));
    }
  }
  for (auto& v : out.per_coordinate) {
    v /= static_cast<double>(inputs.rows());
    out.total += v;
  }
  return out;
}

/// Geometric influence of a transformer classifier: for each input position, the L2 norm over
/// embedding dimensions of the gradient of the top-class probability with respect to that
/// position's embedding, averaged over the inputs.
inline InfluenceReport geometric_influence(const nn::Transformer& model, const Dataset& inputs,
                                           std::size_t chunk = 256) {
  detail::require(inputs.size() >= 1, "geometric influence: no inputs");
  const auto L = static_cast<Eigen::Index>(inputs.seq_len);
  InfluenceReport out;
  out.per_coordinate.assign(static_cast<std::size_t>(L), 0.0);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    const std::size_t end = std::min(inputs.size(), start + chunk);
    rows.clear();
    for (std::size_t r = start; r < end; ++r) rows.push_back(r);
    const nn::TokenBatch b = inputs.batch(rows);
    nn::Tensor emb = nn::Tensor::parameter(model.embed(b).value());
    nn::Tensor p = nn::softmax_rows(model.logits_from_embeddings(emb, b.batch, b.seq_len, {}));
    // Select the top class per example with a constant mask, then sum: examples do not
    // interact, so the gradient splits per example.
    Matrix mask = Matrix::Zero(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      Eigen::Index k = 0;
      p.value().row(i).maxCoeff(&k);
      mask(i, k) = 1.0;
    }
    nn::Tensor top = nn::sum(nn::mul(p, nn::Tensor::constant(std::move(mask))));
    top.backward();
    const Matrix& g = emb.grad();
    for (Eigen::Index e = 0; e < b.batch; ++e) {
      for (Eigen::Index pos = 0; pos < L; ++pos) {
        out.per_coordinate[static_cast<std::size_t>(pos)] += g.row(e * L + pos).norm();
      }
    }
  }
  for (auto& v : out.per_coordinate) {
    v /= static_cast<double>(inputs.size());
    out.total += v;
  }
  return out;
}

}  // namespace nstab::train
