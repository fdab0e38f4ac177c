#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nstab/rng.hpp"
#include "nstab/tinynn/ops.hpp"

namespace nstab::nn {

enum class MaskMode { none, causal };
enum class BlockKind {
  standard,    // attention + output projection, two-layer ReLU FFN, residuals, dropout
  simplified,  // concatenated heads fed to a single ReLU layer, no residuals
};

struct TransformerConfig {
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 2;
  int vocab_size = 118;
  int n_classes = 113;
  int max_length = 512;
  double dropout = 0.1;
  int d_ff = 0;      // 0 selects 4 * d_model
  int head_dim = 0;  // 0 selects d_model / n_heads
  bool sinusoidal_pe = true;
  MaskMode mask = MaskMode::causal;
  bool scale_attention = false;
  bool residual = true;
  bool layer_norm = false;  // pre-norm variant when enabled
  BlockKind block = BlockKind::standard;

  int ffn_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  int head_width() const { return head_dim > 0 ? head_dim : d_model / n_heads; }

  void validate() const {
    detail::require(d_model > 0 && n_layers >= 1 && n_heads >= 1, "transformer: sizes must be positive");
    detail::require(head_dim > 0 || d_model % n_heads == 0, "transformer: d_model must be divisible by n_heads");
    detail::require(vocab_size >= 1 && n_classes >= 1 && max_length >= 1, "transformer: vocab/classes/length");
    detail::require(dropout >= 0.0 && dropout < 1.0, "transformer: dropout must lie in [0, 1)");
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(MaskMode, {{MaskMode::none, "none"}, {MaskMode::causal, "causal"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BlockKind, {{BlockKind::standard, "standard"}, {BlockKind::simplified, "simplified"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TransformerConfig, d_model, n_layers, n_heads, vocab_size, n_classes,
                                                max_length, dropout, d_ff, head_dim, sinusoidal_pe, mask,
                                                scale_attention, residual, layer_norm, block)

/// A batch of equal-length token sequences, row-major (sequence after sequence).
struct TokenBatch {
  std::vector<int> ids;
  Eigen::Index batch = 0;
  Eigen::Index seq_len = 0;
};

struct ForwardOptions {
  bool train = false;
  Rng* dropout_rng = nullptr;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

inline Matrix sinusoidal_pe(Eigen::Index length, Eigen::Index d) {
  Matrix pe(length, d);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

class Transformer {
 public:
  Transformer(TransformerConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng = Rng::substream(seed, streams::kInit);
    const int d = cfg_.d_model, hw = cfg_.n_heads * cfg_.head_width();
    add_xavier("embed", cfg_.vocab_size, d, rng);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      if (cfg_.layer_norm) {
        add_const(p + "ln1.gain", 1, d, 1.0);
        add_const(p + "ln1.bias", 1, d, 0.0);
      }
      add_linear(p + "attn.q", d, hw, rng);
      add_linear(p + "attn.k", d, hw, rng);
      add_linear(p + "attn.v", d, hw, rng);
      if (cfg_.block == BlockKind::standard) {
        add_linear(p + "attn.out", hw, d, rng);
        if (cfg_.layer_norm) {
          add_const(p + "ln2.gain", 1, d, 1.0);
          add_const(p + "ln2.bias", 1, d, 0.0);
        }
        add_linear(p + "ffn.in", d, cfg_.ffn_width(), rng);
        add_linear(p + "ffn.out", cfg_.ffn_width(), d, rng);
      } else {
        add_linear(p + "mlp.phi", hw, d, rng, /*bias=*/false);
      }
    }
    add_linear("head", d, cfg_.n_classes, rng);
    if (cfg_.sinusoidal_pe) pe_ = sinusoidal_pe(cfg_.max_length, d);
  }

  const TransformerConfig& config() const { return cfg_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }

  Tensor& param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p.tensor;
    throw InvalidArgument("no parameter named " + name);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Deep copy with independent parameter storage.
  Transformer clone() const {
    Transformer out(*this);
    for (auto& p : out.params_) p.tensor = Tensor::parameter(p.tensor.value());
    return out;
  }

  /// Token embeddings (no positional encoding), (batch*seq_len) x d_model.
  Tensor embed(const TokenBatch& batch) const {
    check_batch(batch);
    return embedding(get("embed"), batch.ids);
  }

  /// Class logits, batch x n_classes, starting from token embeddings.
  Tensor logits_from_embeddings(const Tensor& emb, Eigen::Index batch, Eigen::Index seq_len,
                                const ForwardOptions& opt) const {
    detail::require(seq_len <= cfg_.max_length, "sequence longer than max_length");
    Tensor x = emb;
    if (cfg_.sinusoidal_pe) {
      Matrix pe(batch * seq_len, cfg_.d_model);
      for (Eigen::Index b = 0; b < batch; ++b) pe.middleRows(b * seq_len, seq_len) = pe_.topRows(seq_len);
      x = add(x, Tensor::constant(std::move(pe)));
    }
    AttentionSpec spec;
    spec.batch = batch;
    spec.seq_len = seq_len;
    spec.heads = cfg_.n_heads;
    spec.causal = cfg_.mask == MaskMode::causal;
    spec.score_scale = cfg_.scale_attention ? 1.0 / std::sqrt(static_cast<double>(cfg_.head_width())) : 1.0;
    spec.dropout = cfg_.block == BlockKind::standard ? cfg_.dropout : 0.0;
    spec.train = opt.train;
    spec.rng = opt.dropout_rng;
    const bool drop = opt.train && cfg_.block == BlockKind::standard;
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      Tensor h = cfg_.layer_norm ? layer_norm(x, get(p + "ln1.gain"), get(p + "ln1.bias")) : x;
      Tensor q = linear(h, p + "attn.q");
      Tensor k = linear(h, p + "attn.k");
      Tensor v = linear(h, p + "attn.v");
      Tensor a = multi_head_attention(q, k, v, spec);
      if (cfg_.block == BlockKind::simplified) {
        Tensor y = relu(nn::linear(a, get(p + "mlp.phi.weight")));
        x = cfg_.residual ? add(x, y) : y;
        continue;
      }
      a = dropout(linear(a, p + "attn.out"), cfg_.dropout, opt.dropout_rng, drop);
      x = cfg_.residual ? add(x, a) : a;
      Tensor h2 = cfg_.layer_norm ? layer_norm(x, get(p + "ln2.gain"), get(p + "ln2.bias")) : x;
      Tensor f = dropout(relu(linear(h2, p + "ffn.in")), cfg_.dropout, opt.dropout_rng, drop);
      f = linear(f, p + "ffn.out");
      x = cfg_.residual ? add(x, f) : f;
    }
    return linear(mean_pool(x, seq_len), "head");
  }

  Tensor logits(const TokenBatch& batch, const ForwardOptions& opt) const {
    return logits_from_embeddings(embed(batch), batch.batch, batch.seq_len, opt);
  }

  /// Class probabilities, batch x n_classes; rows sum to one.
  Tensor probabilities(const TokenBatch& batch, const ForwardOptions& opt) const {
    return softmax_rows(logits(batch, opt));
  }

  /// Eval-mode probabilities as plain values.
  Matrix predict_proba(const TokenBatch& batch) const { return probabilities(batch, {}).value(); }

 private:
  const Tensor& get(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.tensor;
    throw InvalidArgument("no parameter named " + name);
  }

  Tensor linear(const Tensor& x, const std::string& name) const {
    const std::string bias = name + ".bias";
    for (const auto& p : params_)
      if (p.name == bias) return nn::linear(x, get(name + ".weight"), &p.tensor);
    return nn::linear(x, get(name + ".weight"));
  }

  void check_batch(const TokenBatch& b) const {
    detail::require(b.batch >= 1 && b.seq_len >= 1, "empty token batch");
    detail::require(static_cast<Eigen::Index>(b.ids.size()) == b.batch * b.seq_len, "token batch size mismatch");
    detail::require(b.seq_len <= cfg_.max_length, "sequence length " + std::to_string(b.seq_len) +
                                                      " exceeds max_length " + std::to_string(cfg_.max_length));
    for (int id : b.ids) {
      if (id < 0 || id >= cfg_.vocab_size) {
        throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg_.vocab_size));
      }
    }
  }

  void add_linear(const std::string& name, int in, int out, Rng& rng, bool bias = true) {
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.02 * rng.normal();
    params_.push_back({name + ".weight", Tensor::parameter(std::move(w))});
    if (bias) params_.push_back({name + ".bias", Tensor::parameter(Matrix::Zero(1, out))});
  }

  // Xavier-uniform with torch's fan convention for a (rows, cols) weight.
  void add_xavier(const std::string& name, int rows, int cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
    params_.push_back({name, Tensor::parameter(std::move(w))});
  }

  void add_const(const std::string& name, int rows, int cols, double v) {
    params_.push_back({name, Tensor::parameter(Matrix::Constant(rows, cols, v))});
  }

  TransformerConfig cfg_;
  std::vector<NamedParameter> params_;
  Matrix pe_;
};

}  // namespace nstab::nn
