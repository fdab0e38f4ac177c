#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nstab/rng.hpp"
#include "nstab/tinynn/tensor.hpp"

namespace nstab::nn {

namespace detail {
using nstab::detail::require;

inline Matrix& grad_of(Node& n, std::size_t i) { return n.parents[i]->grad; }
inline const Matrix& value_of(Node& n, std::size_t i) { return n.parents[i]->value; }
inline bool tracks(Node& n, std::size_t i) { return n.parents[i]->requires_grad; }

inline void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& n) {
    if (detail::tracks(n, 0)) detail::grad_of(n, 0).noalias() += n.grad * detail::value_of(n, 1).transpose();
    if (detail::tracks(n, 1)) detail::grad_of(n, 1).noalias() += detail::value_of(n, 0).transpose() * n.grad;
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "add");
  return Tensor::from_op(a.value() + b.value(), {a, b}, [](Node& n) {
    if (detail::tracks(n, 0)) detail::grad_of(n, 0) += n.grad;
    if (detail::tracks(n, 1)) detail::grad_of(n, 1) += n.grad;
  });
}

/// a + broadcast of the 1 x cols row vector `bias` over all rows.
inline Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw InvalidArgument("add_rowvec: bias shape");
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return Tensor::from_op(std::move(out), {a, bias}, [](Node& n) {
    if (detail::tracks(n, 0)) detail::grad_of(n, 0) += n.grad;
    if (detail::tracks(n, 1)) detail::grad_of(n, 1) += n.grad.colwise().sum();
  });
}

/// x W + b with b broadcast over rows; `bias` may be empty (no bias).
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr) {
  if (x.cols() != weight.rows()) throw InvalidArgument("linear: inner dimensions differ");
  Matrix out(x.rows(), weight.cols());
  out.noalias() = x.value() * weight.value();
  if (bias == nullptr) {
    return Tensor::from_op(std::move(out), {x, weight}, [](Node& n) {
      if (detail::tracks(n, 0)) detail::grad_of(n, 0).noalias() += n.grad * detail::value_of(n, 1).transpose();
      if (detail::tracks(n, 1)) detail::grad_of(n, 1).noalias() += detail::value_of(n, 0).transpose() * n.grad;
    });
  }
  if (bias->rows() != 1 || bias->cols() != weight.cols()) throw InvalidArgument("linear: bias shape");
  out.rowwise() += bias->value().row(0);
  return Tensor::from_op(std::move(out), {x, weight, *bias}, [](Node& n) {
    if (detail::tracks(n, 0)) detail::grad_of(n, 0).noalias() += n.grad * detail::value_of(n, 1).transpose();
    if (detail::tracks(n, 1)) detail::grad_of(n, 1).noalias() += detail::value_of(n, 0).transpose() * n.grad;
    if (detail::tracks(n, 2)) detail::grad_of(n, 2) += n.grad.colwise().sum();
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return Tensor::from_op(a.value() * s, {a}, [s](Node& n) { detail::grad_of(n, 0) += s * n.grad; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return Tensor::from_op(std::move(out), {a, b}, [](Node& n) {
    if (detail::tracks(n, 0)) detail::grad_of(n, 0) += n.grad.cwiseProduct(detail::value_of(n, 1));
    if (detail::tracks(n, 1)) detail::grad_of(n, 1) += n.grad.cwiseProduct(detail::value_of(n, 0));
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return Tensor::from_op(std::move(out), {a}, [](Node& n) { detail::grad_of(n, 0) += n.grad.transpose(); });
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

/// When set, every relu(Tensor) call appends its input's sign pattern here. Lets a
/// finite-difference check tell when a perturbation crosses a kink.
inline thread_local std::vector<bool>* relu_pattern_sink = nullptr;

inline Tensor relu(const Tensor& a) {
  if (relu_pattern_sink) {
    for (Eigen::Index i = 0; i < a.value().size(); ++i) relu_pattern_sink->push_back(a.value().data()[i] > 0.0);
  }
  Matrix out = a.value().cwiseMax(0.0);
  return Tensor::from_op(std::move(out), {a}, [](Node& n) {
    detail::grad_of(n, 0).array() += (detail::value_of(n, 0).array() > 0.0).select(n.grad.array(), 0.0);
  });
}

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out = m.colwise() - m.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

inline Tensor softmax_rows(const Tensor& a) {
  return Tensor::from_op(softmax_rows(a.value()), {a}, [](Node& n) {
    const Matrix& y = n.value;
    Eigen::VectorXd dot = (n.grad.cwiseProduct(y)).rowwise().sum();
    detail::grad_of(n, 0).array() += y.array() * (n.grad.colwise() - dot).array();
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::from_op(std::move(out), {a}, [](Node& n) { detail::grad_of(n, 0).array() += n.grad(0, 0); });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Row r of the result is row ids[r] of `table`.
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= table.rows()) {
      throw InvalidArgument("embedding: token id " + std::to_string(ids[r]) + " outside vocabulary of " +
                            std::to_string(table.rows()));
    }
    out.row(static_cast<Eigen::Index>(r)) = table.value().row(ids[r]);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return Tensor::from_op(std::move(out), {table}, [saved = std::move(saved)](Node& n) {
    Matrix& g = detail::grad_of(n, 0);
    for (std::size_t r = 0; r < saved.size(); ++r) g.row(saved[r]) += n.grad.row(static_cast<Eigen::Index>(r));
  });
}

/// Inverted dropout: identity unless `train`, otherwise zeroes entries with probability p and
/// rescales survivors by 1/(1-p).
inline Tensor dropout(const Tensor& a, double p, Rng* rng, bool train) {
  if (!train || p <= 0.0) return a;
  detail::require(p < 1.0, "dropout: p must be < 1");
  detail::require(rng != nullptr, "dropout: train mode needs a generator");
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < p ? 0.0 : keep_scale;
  Matrix out = a.value().cwiseProduct(mask);
  return Tensor::from_op(std::move(out), {a}, [mask = std::move(mask)](Node& n) {
    detail::grad_of(n, 0) += n.grad.cwiseProduct(mask);
  });
}

/// Averages each consecutive group of seq_len rows: (batch*seq_len) x d -> batch x d.
inline Tensor mean_pool(const Tensor& a, Eigen::Index seq_len) {
  detail::require(seq_len > 0 && a.rows() % seq_len == 0, "mean_pool: rows not a multiple of seq_len");
  const Eigen::Index batch = a.rows() / seq_len;
  Matrix out(batch, a.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    out.row(b) = a.value().middleRows(b * seq_len, seq_len).colwise().sum() / static_cast<double>(seq_len);
  }
  return Tensor::from_op(std::move(out), {a}, [seq_len, batch](Node& n) {
    Matrix& g = detail::grad_of(n, 0);
    const double inv = 1.0 / static_cast<double>(seq_len);
    for (Eigen::Index b = 0; b < batch; ++b) {
      g.middleRows(b * seq_len, seq_len).rowwise() += inv * n.grad.row(b);
    }
  });
}

/// Mean over rows of -log softmax(logits)[label].
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  detail::require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "cross_entropy: label count");
  Matrix probs = softmax_rows(logits.value());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw InvalidArgument("cross_entropy: label out of range");
    const Eigen::RowVectorXd row = logits.value().row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(y);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(logits.rows());
  std::vector<int> saved(labels.begin(), labels.end());
  return Tensor::from_op(std::move(out), {logits},
                         [probs = std::move(probs), saved = std::move(saved)](Node& n) {
                           const double s = n.grad(0, 0) / static_cast<double>(probs.rows());
                           Matrix& g = detail::grad_of(n, 0);
                           g += s * probs;
                           for (std::size_t r = 0; r < saved.size(); ++r) g(static_cast<Eigen::Index>(r), saved[r]) -= s;
                         });
}

/// Per-row normalization with learned gain and bias (1 x d each).
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const Eigen::Index d = a.cols();
  Matrix xhat(a.rows(), d);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mu = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return Tensor::from_op(std::move(out), {a, gain, bias},
                         [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                           const Matrix& g = n.grad;
                           if (detail::tracks(n, 1)) detail::grad_of(n, 1) += g.cwiseProduct(xhat).colwise().sum();
                           if (detail::tracks(n, 2)) detail::grad_of(n, 2) += g.colwise().sum();
                           if (detail::tracks(n, 0)) {
                             const Eigen::RowVectorXd gamma = detail::value_of(n, 1).row(0);
                             Matrix dxhat = g.array().rowwise() * gamma.array();
                             const double inv_d = 1.0 / static_cast<double>(g.cols());
                             Matrix& ga = detail::grad_of(n, 0);
                             for (Eigen::Index r = 0; r < g.rows(); ++r) {
                               const double m1 = dxhat.row(r).mean();
                               const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).sum() * inv_d;
                               ga.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                             }
                           }
                         });
}

struct AttentionSpec {
  Eigen::Index batch = 1;
  Eigen::Index seq_len = 1;
  Eigen::Index heads = 1;
  bool causal = false;
  double score_scale = 1.0;  // multiplies Q K^T before the softmax
  double dropout = 0.0;      // applied to the attention weights in train mode
  bool train = false;
  Rng* rng = nullptr;
};

/// Multi-head scaled dot-product attention over a batch of sequences.
/// q, k: (batch*seq_len) x (heads*dk); v: (batch*seq_len) x (heads*dv). Returns the concatenated
/// head outputs, (batch*seq_len) x (heads*dv). If `weights` is given it receives the attention
/// matrices stacked as (batch*heads*seq_len) x seq_len, before dropout.
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionSpec& s,
                                   Matrix* weights = nullptr) {
  const Eigen::Index N = s.seq_len, B = s.batch, H = s.heads;
  detail::require(q.rows() == B * N && k.rows() == B * N && v.rows() == B * N, "attention: row count");
  detail::require(q.cols() == k.cols() && q.cols() % H == 0 && v.cols() % H == 0, "attention: head widths");
  const Eigen::Index dk = q.cols() / H, dv = v.cols() / H;
  const bool drop = s.train && s.dropout > 0.0;
  if (drop) detail::require(s.rng != nullptr && s.dropout < 1.0, "attention: dropout configuration");

  // probs holds the softmax weights; applied holds them after dropout (same buffer when off).
  Matrix probs(B * H * N, N);
  Matrix applied;
  if (drop) applied.resize(B * H * N, N);
  Matrix out = Matrix::Zero(B * N, H * dv);
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  const double keep_scale = drop ? 1.0 / (1.0 - s.dropout) : 1.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index h = 0; h < H; ++h) {
      for (Eigen::Index i = 0; i < N; ++i) {
        const Eigen::Index prow = (b * H + h) * N + i;
        const Eigen::Index last = s.causal ? i + 1 : N;
        const auto qi = qv.row(b * N + i).segment(h * dk, dk);
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < last; ++j) {
          const double sc = s.score_scale * qi.dot(kv.row(b * N + j).segment(h * dk, dk));
          probs(prow, j) = sc;
          mx = std::max(mx, sc);
        }
        double z = 0.0;
        for (Eigen::Index j = 0; j < last; ++j) z += (probs(prow, j) = std::exp(probs(prow, j) - mx));
        for (Eigen::Index j = 0; j < last; ++j) probs(prow, j) /= z;
        for (Eigen::Index j = last; j < N; ++j) probs(prow, j) = 0.0;
        if (drop) {
          for (Eigen::Index j = 0; j < N; ++j)
            applied(prow, j) = s.rng->uniform() < s.dropout ? 0.0 : keep_scale * probs(prow, j);
        }
        const Matrix& w = drop ? applied : probs;
        auto oi = out.row(b * N + i).segment(h * dv, dv);
        for (Eigen::Index j = 0; j < last; ++j) oi += w(prow, j) * vv.row(b * N + j).segment(h * dv, dv);
      }
    }
  }
  if (weights) *weights = probs;
  return Tensor::from_op(
      std::move(out), {q, k, v},
      [probs = std::move(probs), applied = std::move(applied), N, B, H, dk, dv, drop, causal = s.causal,
       keep_scale, sc = s.score_scale](Node& n) {
        const Matrix& qv = detail::value_of(n, 0);
        const Matrix& kv = detail::value_of(n, 1);
        const Matrix& vv = detail::value_of(n, 2);
        const bool tq = detail::tracks(n, 0), tk = detail::tracks(n, 1), tv = detail::tracks(n, 2);
        const Matrix& w = drop ? applied : probs;
        Eigen::VectorXd ds(N);
        for (Eigen::Index b = 0; b < B; ++b) {
          for (Eigen::Index h = 0; h < H; ++h) {
            for (Eigen::Index i = 0; i < N; ++i) {
              const Eigen::Index prow = (b * H + h) * N + i;
              const Eigen::Index last = causal ? i + 1 : N;
              const auto go = n.grad.row(b * N + i).segment(h * dv, dv);
              if (tv) {
                for (Eigen::Index j = 0; j < last; ++j)
                  detail::grad_of(n, 2).row(b * N + j).segment(h * dv, dv) += w(prow, j) * go;
              }
              if (!tq && !tk) continue;
              // d loss / d p_ij, then through the softmax.
              double dot = 0.0;
              for (Eigen::Index j = 0; j < last; ++j) {
                double dp = go.dot(vv.row(b * N + j).segment(h * dv, dv));
                if (drop) dp = applied(prow, j) != 0.0 ? dp * keep_scale : 0.0;
                ds(j) = dp;
                dot += dp * probs(prow, j);
              }
              for (Eigen::Index j = 0; j < last; ++j) ds(j) = sc * probs(prow, j) * (ds(j) - dot);
              for (Eigen::Index j = 0; j < last; ++j) {
                if (tq) {
                  detail::grad_of(n, 0).row(b * N + i).segment(h * dk, dk) +=
                      ds(j) * kv.row(b * N + j).segment(h * dk, dk);
                }
                if (tk) {
                  detail::grad_of(n, 1).row(b * N + j).segment(h * dk, dk) +=
                      ds(j) * qv.row(b * N + i).segment(h * dk, dk);
                }
              }
            }
          }
        }
      });
}

/// Single attention head sigma(Y W_Q (Y W_K)^T) (Y W_V) built from primitive ops.
inline Tensor attention_head(const Tensor& y, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                             double score_scale = 1.0) {
  Tensor scores = matmul(matmul(y, w_q), transpose(matmul(y, w_k)));
  if (score_scale != 1.0) scores = scale(scores, score_scale);
  return matmul(softmax_rows(scores), matmul(y, w_v));
}

}  // namespace nstab::nn
