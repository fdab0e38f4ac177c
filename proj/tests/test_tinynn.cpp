#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "nstab/tinynn/checkpoint.hpp"
#include "nstab/tinynn/ops.hpp"
#include "nstab/tinynn/transformer.hpp"
#include "support/gradcheck.hpp"

using namespace nstab;
using nn::Tensor;

namespace {

Matrix gaussian(Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = s * rng.normal();
  return m;
}

nn::TransformerConfig small_config(int d_model = 32) {
  nn::TransformerConfig c;
  c.d_model = d_model;
  c.n_layers = 2;
  c.n_heads = 2;
  c.vocab_size = 10;
  c.n_classes = 7;
  c.max_length = 16;
  c.dropout = 0.0;
  return c;
}

nn::TokenBatch random_batch(Rng& rng, Eigen::Index batch, Eigen::Index len, int vocab) {
  nn::TokenBatch b;
  b.batch = batch;
  b.seq_len = len;
  for (Eigen::Index i = 0; i < batch * len; ++i) b.ids.push_back(static_cast<int>(rng.uniform_int(vocab)));
  return b;
}

// Probability-weighted loss: small in magnitude, so difference quotients stay far above the
// float64 rounding floor even for near-zero gradients.
oracle::LossFn weighted_probability_loss(const nn::TokenBatch& b, const Matrix& r, nn::ForwardOptions opt = {},
                                          std::uint64_t dropout_seed = 0) {
  return [b, r, opt, dropout_seed](const nn::Transformer& m) {
    Rng drop(dropout_seed);
    nn::ForwardOptions o = opt;
    if (o.train) o.dropout_rng = &drop;
    return nn::mean(nn::mul(m.probabilities(b, o), Tensor::constant(r)));
  };
}

void expect_gradients_match(nn::Transformer& model, const oracle::LossFn& loss) {
  const auto rep = oracle::gradient_check(model, loss, 1e-4, 1e-4);
  EXPECT_EQ(rep.failed, 0u) << "worst " << rep.worst << " rel err " << rep.max_rel_err;
  EXPECT_LT(rep.max_rel_err, 1e-4);
  EXPECT_GT(rep.checked, 0.9 * static_cast<double>(model.parameter_count()));
}

}  // namespace

TEST(Tensor, LinearModelGradientIsInput) {
  Tensor w = Tensor::parameter(Matrix::Constant(1, 1, 0.7));
  Tensor y = nn::sum(nn::matmul(Tensor::constant(Matrix::Constant(1, 1, 3.0)), w));
  y.backward();
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 3.0);
}

TEST(Tensor, BackwardWithoutForwardThrows) {
  Tensor w = Tensor::parameter(Matrix::Constant(1, 1, 1.0));
  EXPECT_THROW(w.backward(), InvalidArgument);
  Tensor y = nn::sum(nn::scale(w, 2.0));
  y.backward();
  EXPECT_THROW(y.backward(), InvalidArgument);
  EXPECT_THROW(nn::sum(nn::scale(Tensor::constant(Matrix::Ones(1, 1)), 2.0)).backward(), InvalidArgument);
}

TEST(Tensor, BackwardNeedsScalar) {
  Tensor w = Tensor::parameter(Matrix::Ones(2, 2));
  EXPECT_THROW(nn::scale(w, 2.0).backward(), InvalidArgument);
}

TEST(Tensor, GradientsAccumulateOverSharedUses) {
  Tensor w = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
  nn::sum(nn::mul(w, w)).backward();
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 4.0);
}

TEST(Ops, ReluAndSoftmax) {
  EXPECT_EQ(nn::relu(-2.0), 0.0);
  EXPECT_EQ(nn::relu(3.0), 3.0);
  const Matrix s = nn::softmax_rows(Matrix::Zero(2, 5));
  for (Eigen::Index k = 0; k < s.size(); ++k) EXPECT_DOUBLE_EQ(s.data()[k], 0.2);
  Matrix big(1, 3);
  big << 1000.0, 1000.0, -1000.0;
  const Matrix sb = nn::softmax_rows(big);
  EXPECT_NEAR(sb(0, 0), 0.5, 1e-15);
  EXPECT_EQ(sb(0, 2), 0.0);
}

TEST(Ops, ShapeMismatchThrows) {
  Tensor a = Tensor::constant(Matrix::Ones(2, 3)), b = Tensor::constant(Matrix::Ones(2, 2));
  EXPECT_THROW(nn::add(a, b), InvalidArgument);
  EXPECT_THROW(nn::matmul(a, a), InvalidArgument);
  EXPECT_THROW(nn::mean_pool(a, 4), InvalidArgument);
}

TEST(Ops, CrossEntropyOfUniformPrediction) {
  const int C = 6, B = 3;
  Tensor logits = Tensor::parameter(Matrix::Constant(B, C, 0.4));
  const std::vector<int> y{0, 5, 2};
  Tensor loss = nn::cross_entropy(logits, y);
  EXPECT_NEAR(loss.item(), std::log(static_cast<double>(C)), 1e-14);
  loss.backward();
  for (int r = 0; r < B; ++r)
    for (int c = 0; c < C; ++c) {
      const double expected = (1.0 / C - (c == y[static_cast<std::size_t>(r)] ? 1.0 : 0.0)) / B;
      EXPECT_NEAR(logits.grad()(r, c), expected, 1e-15);
    }
}

TEST(Ops, CrossEntropyGradientGeneral) {
  Rng rng(3);
  const Matrix l = gaussian(rng, 4, 5);
  Tensor logits = Tensor::parameter(l);
  const std::vector<int> y{4, 0, 1, 1};
  nn::cross_entropy(logits, y).backward();
  const Matrix p = nn::softmax_rows(l);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c)
      EXPECT_NEAR(logits.grad()(r, c), (p(r, c) - (c == y[static_cast<std::size_t>(r)] ? 1.0 : 0.0)) / 4.0, 1e-15);
}

TEST(Ops, DropoutEvalIdentityTrainRescales) {
  Rng rng(1);
  const Matrix x = gaussian(rng, 50, 40);
  Tensor t = Tensor::constant(x);
  EXPECT_EQ(nn::dropout(t, 0.3, &rng, false).value(), x);
  const Matrix y = nn::dropout(t, 0.25, &rng, true).value();
  std::size_t zeros = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (y.data()[k] == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(y.data()[k], x.data()[k] / 0.75, 1e-15);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(x.size()), 0.25, 0.04);
  EXPECT_THROW(nn::dropout(t, 0.25, nullptr, true), InvalidArgument);
}

TEST(Ops, SinusoidalEncoding) {
  const Matrix pe = nn::sinusoidal_pe(10, 8);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(3, 0), std::sin(3.0), 1e-15);
  EXPECT_NEAR(pe(3, 3), std::cos(3.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-15);
}

TEST(Ops, MeanPoolAveragesGroups) {
  Matrix a(4, 2);
  a << 1, 2, 3, 4, 5, 6, 7, 8;
  const Matrix p = nn::mean_pool(Tensor::constant(a), 2).value();
  EXPECT_EQ(p.rows(), 2);
  EXPECT_DOUBLE_EQ(p(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p(1, 1), 7.0);
}

TEST(Ops, AttentionWithIdentityScoresApproachesIdentity) {
  const int n = 8, d = 256;
  Rng rng(11);
  const Matrix y = gaussian(rng, n, d);
  const Tensor I = Tensor::constant(Matrix::Identity(d, d));
  const Matrix a = nn::softmax_rows(y * y.transpose());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) EXPECT_NEAR(a(i, j), i == j ? 1.0 : 0.0, 1e-3);
  const Matrix head = nn::attention_head(Tensor::constant(y), I, I, I).value();
  EXPECT_LT((head - a * y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Ops, MultiHeadAttentionMatchesSingleHeadComposition) {
  Rng rng(4);
  const Eigen::Index N = 5, d = 6;
  const Matrix y = gaussian(rng, N, d), wq = gaussian(rng, d, d, 0.4), wk = gaussian(rng, d, d, 0.4),
               wv = gaussian(rng, d, d);
  nn::AttentionSpec spec;
  spec.seq_len = N;
  spec.heads = 1;
  const Matrix mha = nn::multi_head_attention(Tensor::constant(y * wq), Tensor::constant(y * wk),
                                              Tensor::constant(y * wv), spec)
                         .value();
  const Matrix ref = nn::attention_head(Tensor::constant(y), Tensor::constant(wq), Tensor::constant(wk),
                                        Tensor::constant(wv))
                         .value();
  EXPECT_LT((mha - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ops, CausalMaskHidesFuture) {
  Rng rng(8);
  const Eigen::Index N = 4, d = 4;
  Matrix q = gaussian(rng, N, d), k = gaussian(rng, N, d), v = gaussian(rng, N, d);
  nn::AttentionSpec spec;
  spec.seq_len = N;
  spec.causal = true;
  Matrix w;
  const Matrix out = nn::multi_head_attention(Tensor::constant(q), Tensor::constant(k), Tensor::constant(v), spec, &w)
                         .value();
  for (Eigen::Index i = 0; i < N; ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-14);
    for (Eigen::Index j = i + 1; j < N; ++j) EXPECT_EQ(w(i, j), 0.0);
  }
  EXPECT_LT((out.row(0) - v.row(0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(OpGradients, PrimitivesMatchFiniteDifferences) {
  Rng rng(21);
  const Matrix r = gaussian(rng, 5, 4);
  auto probe = [&](const Tensor& t) { return nn::mean(nn::mul(t, Tensor::constant(r))); };
  const std::vector<std::pair<const char*, std::function<Tensor(const std::vector<Tensor>&)>>> cases = {
      {"matmul", [&](const auto& p) { return probe(nn::matmul(p[0], p[1])); }},
      {"linear", [&](const auto& p) { return probe(nn::linear(p[0], p[1], &p[2])); }},
      {"softmax", [&](const auto& p) { return probe(nn::softmax_rows(nn::matmul(p[0], p[1]))); }},
      {"relu", [&](const auto& p) { return probe(nn::relu(nn::matmul(p[0], p[1]))); }},
      {"transpose", [&](const auto& p) { return probe(nn::transpose(nn::transpose(nn::matmul(p[0], p[1])))); }},
      {"layer_norm", [&](const auto& p) { return probe(nn::layer_norm(nn::matmul(p[0], p[1]), p[2], p[2])); }},
  };
  for (const auto& [name, f] : cases) {
    std::vector<Matrix> in{gaussian(rng, 5, 3), gaussian(rng, 3, 4), gaussian(rng, 1, 4)};
    const auto rep = oracle::gradient_check(in, f, 1e-4, 1e-4);
    EXPECT_EQ(rep.failed, 0u) << name << " worst " << rep.worst << " " << rep.max_rel_err;
  }
}

TEST(OpGradients, AttentionHeadAndPoolingMatchFiniteDifferences) {
  Rng rng(22);
  const Matrix r = gaussian(rng, 2, 3);
  auto f = [&](const std::vector<Tensor>& p) {
    Tensor a = nn::attention_head(p[0], p[1], p[2], p[3], 0.5);
    return nn::mean(nn::mul(nn::mean_pool(a, 3), Tensor::constant(r)));
  };
  std::vector<Matrix> in{gaussian(rng, 6, 4), gaussian(rng, 4, 4), gaussian(rng, 4, 4), gaussian(rng, 4, 3)};
  const auto rep = oracle::gradient_check(in, f, 1e-4, 1e-4);
  EXPECT_EQ(rep.failed, 0u) << rep.worst << " " << rep.max_rel_err;

  const Matrix r2 = gaussian(rng, 2, 4);
  auto mha = [&](const std::vector<Tensor>& p) {
    nn::AttentionSpec s;
    s.batch = 2;
    s.seq_len = 3;
    s.heads = 2;
    s.causal = true;
    s.score_scale = 0.7;
    Tensor a = nn::multi_head_attention(p[0], p[1], p[2], s);
    return nn::mean(nn::mul(nn::mean_pool(a, 3), Tensor::constant(r2)));
  };
  std::vector<Matrix> in2{gaussian(rng, 6, 4), gaussian(rng, 6, 4), gaussian(rng, 6, 4)};
  const auto rep2 = oracle::gradient_check(in2, mha, 1e-4, 1e-4);
  EXPECT_EQ(rep2.failed, 0u) << rep2.worst << " " << rep2.max_rel_err;
}

TEST(OpGradients, EmbeddingScattersIntoRows) {
  Tensor table = Tensor::parameter(Matrix::Zero(4, 2));
  const std::vector<int> ids{1, 3, 1};
  nn::sum(nn::embedding(table, ids)).backward();
  EXPECT_DOUBLE_EQ(table.grad()(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(table.grad()(3, 1), 1.0);
  EXPECT_DOUBLE_EQ(table.grad()(0, 0), 0.0);
  EXPECT_THROW(nn::embedding(table, std::vector<int>{4}), InvalidArgument);
}

TEST(Transformer, ProbabilitiesSumToOne) {
  nn::Transformer m(small_config(), 1);
  Rng rng(2);
  const Matrix p = m.predict_proba(random_batch(rng, 6, 5, 10));
  ASSERT_EQ(p.rows(), 6);
  ASSERT_EQ(p.cols(), 7);
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
}

TEST(Transformer, ZeroedHeadGivesUniform) {
  nn::Transformer m(small_config(), 3);
  m.param("head.weight").mutable_value().setZero();
  m.param("head.bias").mutable_value().setZero();
  Rng rng(4);
  const Matrix p = m.predict_proba(random_batch(rng, 3, 7, 10));
  for (Eigen::Index k = 0; k < p.size(); ++k) EXPECT_DOUBLE_EQ(p.data()[k], 1.0 / 7.0);
}

TEST(Transformer, DeterministicForSeed) {
  Rng r1(5), r2(5);
  const auto b1 = random_batch(r1, 4, 6, 10), b2 = random_batch(r2, 4, 6, 10);
  nn::TransformerConfig c = small_config();
  c.dropout = 0.1;
  const Matrix p1 = nn::Transformer(c, 9).predict_proba(b1);
  const Matrix p2 = nn::Transformer(c, 9).predict_proba(b2);
  EXPECT_EQ(p1, p2);
  EXPECT_NE(p1, nn::Transformer(c, 10).predict_proba(b1));
}

TEST(Transformer, PermutationInvariantWithoutMaskOrPositions) {
  nn::TransformerConfig c = small_config();
  c.mask = nn::MaskMode::none;
  c.sinusoidal_pe = false;
  nn::Transformer m(c, 12);
  oracle::randomize_parameters(m, 0.3, 13);
  Rng rng(6);
  nn::TokenBatch b = random_batch(rng, 1, 8, 10);
  const Matrix p = m.predict_proba(b);
  std::vector<int> perm{3, 0, 7, 5, 1, 6, 2, 4};
  nn::TokenBatch bp = b;
  for (std::size_t i = 0; i < perm.size(); ++i) bp.ids[i] = b.ids[static_cast<std::size_t>(perm[i])];
  EXPECT_NE(b.ids, bp.ids);
  EXPECT_LT((m.predict_proba(bp) - p).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.logits(bp, {}).value() - m.logits(b, {}).value()).cwiseAbs().maxCoeff(), 1e-10);

  c.mask = nn::MaskMode::causal;
  nn::Transformer causal(c, 12);
  oracle::randomize_parameters(causal, 0.3, 13);
  EXPECT_GT((causal.logits(bp, {}).value() - causal.logits(b, {}).value()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Transformer, EvalModeIsPure) {
  nn::TransformerConfig c = small_config();
  c.dropout = 0.5;
  nn::Transformer m(c, 1);
  Rng rng(7);
  const auto b = random_batch(rng, 3, 4, 10);
  EXPECT_EQ(m.predict_proba(b), m.predict_proba(b));
  Rng d1(1);
  EXPECT_NE(m.probabilities(b, {true, &d1}).value(), m.predict_proba(b));
}

TEST(Transformer, RejectsBadInputs) {
  nn::Transformer m(small_config(), 1);
  Rng rng(1);
  auto b = random_batch(rng, 1, 4, 10);
  b.ids[2] = 10;
  EXPECT_THROW(m.predict_proba(b), InvalidArgument);
  EXPECT_THROW(m.predict_proba(random_batch(rng, 1, 17, 10)), InvalidArgument);
  nn::TransformerConfig c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(nn::Transformer(c, 0), InvalidArgument);
  c = small_config();
  c.dropout = 1.0;
  EXPECT_THROW(nn::Transformer(c, 0), InvalidArgument);
}

TEST(Transformer, InitializationScales) {
  nn::TransformerConfig c = small_config(64);
  nn::Transformer m(c, 2);
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& p : m.parameters()) {
    const Matrix& v = p.tensor.value();
    if (p.name.ends_with(".bias")) {
      EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0) << p.name;
    } else if (p.name == "embed") {
      EXPECT_LE(v.cwiseAbs().maxCoeff(), std::sqrt(6.0 / (10 + 64)));
    } else {
      ss += v.squaredNorm();
      n += static_cast<std::size_t>(v.size());
    }
  }
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), 0.02, 0.0005);
}

TEST(Transformer, CloneIsIndependent) {
  nn::Transformer m(small_config(), 1);
  nn::Transformer c = m.clone();
  c.param("head.bias").mutable_value().setConstant(1.0);
  EXPECT_EQ(m.param("head.bias").value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(TransformerGradients, TwoLayerTwoHeadEndToEnd) {
  nn::Transformer m(small_config(32), 1);
  Rng rng(5);
  const auto b = random_batch(rng, 4, 5, 10);
  expect_gradients_match(m, weighted_probability_loss(b, gaussian(rng, 4, 7)));
}

TEST(TransformerGradients, CrossEntropyAboveRoundingFloor) {
  // ln C sized losses put the difference-quotient rounding error near 1e-12, so gradients
  // below 1e-6 are checked in absolute terms.
  nn::TransformerConfig c = small_config(16);
  nn::Transformer m(c, 2);
  oracle::randomize_parameters(m, 0.15, 3);
  Rng rng(6);
  const auto b = random_batch(rng, 3, 4, 10);
  const std::vector<int> y{0, 6, 2};
  m.zero_grad();
  nn::cross_entropy(m.logits(b, {}), y).backward();
  for (auto& p : m.parameters()) {
    const Matrix g = p.tensor.grad();
    Matrix& w = p.tensor.mutable_value();
    for (Eigen::Index k = 0; k < w.size(); k += 7) {
      const double orig = w.data()[k];
      w.data()[k] = orig + 1e-4;
      const double up = nn::cross_entropy(m.logits(b, {}), y).item();
      w.data()[k] = orig - 1e-4;
      const double down = nn::cross_entropy(m.logits(b, {}), y).item();
      w.data()[k] = orig;
      const double fd = (up - down) / 2e-4, gk = g.data()[k];
      if (std::abs(gk) > 1e-6) {
        EXPECT_LT(std::abs(fd - gk) / std::abs(gk), 1e-4) << p.name << "[" << k << "]";
      } else {
        EXPECT_LT(std::abs(fd - gk), 1e-10) << p.name << "[" << k << "]";
      }
    }
  }
}

TEST(TransformerGradients, VariantsEndToEnd) {
  Rng rng(9);
  const auto b = random_batch(rng, 3, 4, 10);
  const Matrix r = gaussian(rng, 3, 7);
  nn::TransformerConfig base = small_config(16);

  nn::TransformerConfig ln = base;
  ln.layer_norm = true;
  ln.scale_attention = true;
  nn::Transformer m_ln(ln, 1);
  oracle::randomize_parameters(m_ln, 0.2, 1);
  expect_gradients_match(m_ln, weighted_probability_loss(b, r));

  nn::TransformerConfig simple = base;
  simple.block = nn::BlockKind::simplified;
  simple.residual = false;
  simple.mask = nn::MaskMode::none;
  nn::Transformer m_s(simple, 2);
  oracle::randomize_parameters(m_s, 0.3, 2);
  expect_gradients_match(m_s, weighted_probability_loss(b, r));

  nn::TransformerConfig drop = base;
  drop.dropout = 0.2;
  nn::Transformer m_d(drop, 3);
  oracle::randomize_parameters(m_d, 0.2, 3);
  expect_gradients_match(m_d, weighted_probability_loss(b, r, {true, nullptr}, 77));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  nn::TransformerConfig c = small_config();
  c.layer_norm = true;
  nn::Transformer m(c, 4);
  oracle::randomize_parameters(m, 0.1, 5);
  const auto path = std::filesystem::temp_directory_path() / "nstab_ckpt_roundtrip.bin";
  nn::save_checkpoint(path, m, {{"epoch", 12}});
  const auto loaded = nn::load_checkpoint(path);
  EXPECT_EQ(loaded.metadata.at("epoch"), 12);
  EXPECT_EQ(nlohmann::json(loaded.model.config()), nlohmann::json(c));
  ASSERT_EQ(loaded.model.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(loaded.model.parameters()[i].name, m.parameters()[i].name);
    EXPECT_EQ(loaded.model.parameters()[i].tensor.value(), m.parameters()[i].tensor.value());
  }
  Rng rng(1);
  const auto b = random_batch(rng, 2, 5, 10);
  EXPECT_EQ(loaded.model.predict_proba(b), m.predict_proba(b));

  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "NSTABCK1");
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  nn::Transformer m(small_config(), 4);
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = dir / "nstab_ckpt_good.bin", bad = dir / "nstab_ckpt_bad.bin";
  nn::save_checkpoint(good, m);
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& s) { std::ofstream(bad, std::ios::binary) << s; };
  write("XXXXXXXX" + bytes.substr(8));
  EXPECT_THROW(nn::load_checkpoint(bad), InvalidArgument);
  write(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(nn::load_checkpoint(bad), InvalidArgument);
  std::string v2 = bytes;
  v2[8] = 2;
  write(v2);
  EXPECT_THROW(nn::load_checkpoint(bad), InvalidArgument);
  EXPECT_THROW(nn::load_checkpoint(dir / "nstab_no_such_file.bin"), InvalidArgument);
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}
