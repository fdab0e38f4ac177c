#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "nstab/error.hpp"
#include "nstab/rng.hpp"
#include "nstab/tinynn/transformer.hpp"

namespace nstab::train {

struct Dataset {
  std::vector<int> tokens;  // row-major, size() * seq_len entries
  std::vector<int> labels;
  int seq_len = 0;

  std::size_t size() const { return labels.size(); }

  nn::TokenBatch batch(std::span<const std::size_t> rows) const {
    nn::TokenBatch b;
    b.batch = static_cast<Eigen::Index>(rows.size());
    b.seq_len = seq_len;
    b.ids.reserve(rows.size() * static_cast<std::size_t>(seq_len));
    for (auto r : rows) {
      auto first = tokens.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(seq_len));
      b.ids.insert(b.ids.end(), first, first + seq_len);
    }
    return b;
  }

  nn::TokenBatch all() const {
    std::vector<std::size_t> rows(size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return batch(rows);
  }

  std::vector<int> labels_of(std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(labels[r]);
    return out;
  }
};

enum class TaskKind { modular_addition, noisy_sparse_parity };
NLOHMANN_JSON_SERIALIZE_ENUM(TaskKind, {{TaskKind::modular_addition, "mod-add"},
                                        {TaskKind::noisy_sparse_parity, "nsp"}})

struct TaskSpec {
  TaskKind kind = TaskKind::modular_addition;
  int modulus = 113;            // modular addition
  int n_bits = 20;              // sparse parity input length
  int k = 2;                    // sparse parity support size
  double eta = 0.0;             // training-label flip probability
  std::uint64_t secret_seed = 0;
  std::size_t train_size = 2000;
  std::size_t val_size = 200;
  std::size_t test_size = 200;
  std::uint64_t data_seed = 0;

  void validate() const {
    if (kind == TaskKind::modular_addition) {
      detail::require(modulus >= 2, "mod-add: modulus must be >= 2");
      bool prime = true;
      for (int p = 2; p * p <= modulus; ++p) prime = prime && (modulus % p != 0);
      detail::require(prime, "mod-add: modulus must be prime");
      const auto pairs = static_cast<std::size_t>(modulus) * static_cast<std::size_t>(modulus);
      detail::require(train_size + val_size + test_size <= pairs,
                      "mod-add: train+val+test exceeds the " + std::to_string(pairs) + " distinct pairs");
    } else {
      detail::require(n_bits >= 1 && k >= 1 && k <= n_bits, "nsp: need 1 <= k <= n");
      detail::require(eta >= 0.0 && eta < 0.5, "nsp: eta must lie in [0, 0.5)");
    }
    detail::require(train_size >= 1 && val_size >= 1, "task: empty split");
  }

  /// Number of distinct token ids the model must embed.
  int vocab_size() const { return kind == TaskKind::modular_addition ? modulus + 5 : 2; }
  int n_classes() const { return kind == TaskKind::modular_addition ? modulus : 2; }
  int seq_len() const { return kind == TaskKind::modular_addition ? 3 : n_bits; }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TaskSpec, kind, modulus, n_bits, k, eta, secret_seed, train_size,
                                                val_size, test_size, data_seed)

struct TaskData {
  Dataset train, val, test;
  std::vector<int> secret;  // sparse parity support (0-based), empty for mod-add
};

/// Secret support of a sparse parity task, sorted.
inline std::vector<int> parity_support(int n_bits, int k, std::uint64_t secret_seed) {
  std::vector<int> idx(static_cast<std::size_t>(n_bits));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::substream(secret_seed, 0);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Modular addition: sequences (a, b, '=') with '=' encoded as id K; label (a + b) mod K.
/// Splits are disjoint draws from the K^2 pairs. Ids K+1..K+4 are reserved and never emitted.
inline TaskData make_modular_addition(const TaskSpec& spec) {
  spec.validate();
  const int K = spec.modulus;
  std::vector<int> pairs(static_cast<std::size_t>(K) * static_cast<std::size_t>(K));
  std::iota(pairs.begin(), pairs.end(), 0);
  Rng rng = Rng::substream(spec.data_seed, streams::kData);
  rng.shuffle(pairs.begin(), pairs.end());
  auto fill = [&](Dataset& ds, std::size_t begin, std::size_t count) {
    ds.seq_len = 3;
    for (std::size_t i = begin; i < begin + count; ++i) {
      const int a = pairs[i] / K, b = pairs[i] % K;
      ds.tokens.insert(ds.tokens.end(), {a, b, K});
      ds.labels.push_back((a + b) % K);
    }
  };
  TaskData out;
  fill(out.train, 0, spec.train_size);
  fill(out.val, spec.train_size, spec.val_size);
  fill(out.test, spec.train_size + spec.val_size, spec.test_size);
  return out;
}

/// Noisy k-sparse parity on n binary tokens. Training labels are flipped with probability eta;
/// validation and test labels are clean.
inline TaskData make_sparse_parity(const TaskSpec& spec) {
  spec.validate();
  TaskData out;
  out.secret = parity_support(spec.n_bits, spec.k, spec.secret_seed);
  Rng rng = Rng::substream(spec.data_seed, streams::kData);
  auto fill = [&](Dataset& ds, std::size_t count, bool noisy) {
    ds.seq_len = spec.n_bits;
    for (std::size_t i = 0; i < count; ++i) {
      int parity = 0;
      const std::size_t base = ds.tokens.size();
      for (int j = 0; j < spec.n_bits; ++j) ds.tokens.push_back(static_cast<int>(rng.uniform_int(2)));
      for (int j : out.secret) parity ^= ds.tokens[base + static_cast<std::size_t>(j)];
      if (noisy && rng.bernoulli(spec.eta)) parity ^= 1;
      ds.labels.push_back(parity);
    }
  };
  fill(out.train, spec.train_size, true);
  fill(out.val, spec.val_size, false);
  fill(out.test, spec.test_size, false);
  return out;
}

inline TaskData make_task(const TaskSpec& spec) {
  return spec.kind == TaskKind::modular_addition ? make_modular_addition(spec) : make_sparse_parity(spec);
}

}  // namespace nstab::train
