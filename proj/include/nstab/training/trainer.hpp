#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nstab/io.hpp"
#include "nstab/noise.hpp"
#include "nstab/rng.hpp"
#include "nstab/tinynn/transformer.hpp"
#include "nstab/training/optimizer.hpp"
#include "nstab/training/probes.hpp"
#include "nstab/training/regularizer.hpp"
#include "nstab/training/tasks.hpp"

namespace nstab::train {

struct TrainConfig {
  TaskSpec task;
  nn::TransformerConfig model;  // vocab_size and n_classes are taken from the task
  AdamWConfig optimizer;
  PlateauConfig scheduler;
  int epochs = 7000;
  int batch_size = 256;
  std::uint64_t seed = 0;
  bool use_regularizer = false;
  RegularizerConfig regularizer;
  int probe_every = 0;  // epochs between stability probes, 0 disables
  double probe_rho = 0.5;
  std::uint64_t probe_samples = 512;
  int influence_every = 0;  // epochs between geometric-influence snapshots, 0 disables
  double target_acc = 0.95;
  int epochs_after_target = -1;  // stop this many epochs after first reaching target_acc; -1 runs all epochs

  /// Model config with task-derived vocabulary and class counts filled in.
  nn::TransformerConfig resolved_model() const {
    nn::TransformerConfig m = model;
    m.vocab_size = task.vocab_size();
    m.n_classes = task.n_classes();
    return m;
  }

  void validate() const {
    task.validate();
    resolved_model().validate();
    detail::require(epochs >= 1, "train: epochs must be >= 1");
    detail::require(batch_size >= 1, "train: batch size must be >= 1");
    detail::require(task.seq_len() <= model.max_length, "train: task sequence exceeds max_length");
    if (use_regularizer) regularizer.validate();
    detail::require(probe_rho >= -1.0 && probe_rho <= 1.0, "train: probe rho must lie in [-1, 1]");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, task, model, optimizer, scheduler, epochs, batch_size,
                                                seed, use_regularizer, regularizer, probe_every, probe_rho,
                                                probe_samples, influence_every, target_acc, epochs_after_target)

struct EpochRecord {
  int epoch = 0;
  long step = 0;  // optimizer steps completed at the end of the epoch
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double reg_value = std::numeric_limits<double>::quiet_NaN();
  double stab_probe = std::numeric_limits<double>::quiet_NaN();
  double stab_probe_normalized = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double influence_total = std::numeric_limits<double>::quiet_NaN();
};

struct TrainRun {
  std::vector<EpochRecord> records;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
  std::optional<int> epochs_to_target;
  std::optional<long> steps_to_target;
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::string message;
};

struct EvalResult {
  double loss = 0.0;
  double acc = 0.0;
};

inline EvalResult evaluate(const nn::Transformer& model, const Dataset& ds, std::size_t chunk = 512) {
  EvalResult r;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t end = std::min(ds.size(), start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const nn::TokenBatch b = ds.batch(rows);
    const std::vector<int> y = ds.labels_of(rows);
    const nn::Tensor logits = model.logits(b, {});
    r.loss += nn::cross_entropy(logits, y).item() * static_cast<double>(rows.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index k = 0;
      logits.value().row(i).maxCoeff(&k);
      if (k == y[static_cast<std::size_t>(i)]) r.acc += 1.0;
    }
  }
  r.loss /= static_cast<double>(ds.size());
  r.acc /= static_cast<double>(ds.size());
  return r;
}

/// Called after every epoch with the record just appended; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&, const nn::Transformer&)>;

/// Trains a fresh model on the task. Each consumer of randomness draws from its own substream
/// of `cfg.seed`, so enabling the regularizer with gamma = 0 leaves the trajectory unchanged.
inline TrainRun train(const TrainConfig& cfg, nn::Transformer* out_model = nullptr,
                      const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainRun run;
  run.seed = cfg.seed;
  run.config_hash = io::config_hash(nlohmann::json(cfg));

  const TaskData data = make_task(cfg.task);
  nn::Transformer model(cfg.resolved_model(), cfg.seed);
  AdamW opt(model.parameters(), cfg.optimizer);
  PlateauScheduler sched(cfg.scheduler);
  Rng shuffle_rng = Rng::substream(cfg.seed, streams::kShuffle);
  Rng dropout_rng = Rng::substream(cfg.seed, streams::kDropout);
  Rng reg_dropout_rng = Rng::substream(cfg.seed, streams::kRegDropout);
  TokenNoiseSampler reg_noise(cfg.use_regularizer ? cfg.regularizer.rho : 0.0, model.config().vocab_size,
                              derive_seed(cfg.seed, streams::kRegNoise));
  const std::uint64_t probe_seed = derive_seed(cfg.seed, streams::kProbe);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  long steps = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0, reg_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const nn::TokenBatch xb = data.train.batch(rows);
      const std::vector<int> yb = data.train.labels_of(rows);
      model.zero_grad();
      nn::Tensor logits = model.logits(xb, {true, &dropout_rng});
      nn::Tensor ce = nn::cross_entropy(logits, yb);
      nn::Tensor loss = ce;
      if (cfg.use_regularizer) {
        nn::TokenBatch yn = xb;
        yn.ids = reg_noise.sample(xb.ids);
        nn::Tensor py = model.probabilities(yn, {true, &reg_dropout_rng});
        nn::Tensor reg = regularizer_from_probabilities(nn::softmax_rows(logits), py, cfg.regularizer.S);
        reg_sum += reg.item() * static_cast<double>(rows.size());
        loss = nn::add(loss, nn::scale(reg, cfg.regularizer.gamma));
      }
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        run.diverged = true;
        run.message = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(steps + 1);
        run.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (out_model) *out_model = model;
        return run;
      }
      loss_sum += ce.item() * static_cast<double>(rows.size());
      loss.backward();
      opt.step();
      ++steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = steps;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (cfg.use_regularizer) rec.reg_value = reg_sum / static_cast<double>(order.size());
    const EvalResult val = evaluate(model, data.val);
    rec.val_loss = val.loss;
    rec.val_acc = val.acc;
    rec.lr = opt.lr();
    opt.set_lr(sched.step(val.loss, opt.lr()));
    if (cfg.probe_every > 0 && (epoch == 1 || epoch % cfg.probe_every == 0)) {
      const ProbeReport probe =
          probe_report(model, data.val, cfg.probe_rho, cfg.probe_samples, derive_seed(probe_seed, epoch));
      rec.stab_probe = probe.stability.mean;
      rec.stab_probe_normalized = probe.normalized;
    }
    if (cfg.influence_every > 0 && (epoch == 1 || epoch % cfg.influence_every == 0)) {
      rec.influence_total = geometric_influence(model, data.val).total;
    }
    run.records.push_back(rec);
    if (!run.epochs_to_target && val.acc >= cfg.target_acc) {
      run.epochs_to_target = epoch;
      run.steps_to_target = steps;
    }
    if (on_epoch && !on_epoch(rec, model)) break;
    if (run.epochs_to_target && cfg.epochs_after_target >= 0 &&
        epoch >= *run.epochs_to_target + cfg.epochs_after_target) {
      break;
    }
  }
  run.test_acc = evaluate(model, data.test).acc;
  run.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out_model) *out_model = model;
  return run;
}

}  // namespace nstab::train
