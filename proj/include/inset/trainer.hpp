#pragma once

#include "inset/adam.hpp"
#include "inset/checkpoint.hpp"
#include "inset/loss.hpp"
#include "inset/model.hpp"
#include "inset/predict.hpp"
#include "inset/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

struct TrainConfig {
  LossHyper loss;
  AdamHyper adam;
  std::size_t batch_size = 32;
  std::size_t patience = 6;
  std::size_t max_epochs = 100;
  InferenceConfig inference;
  NOutRule n_out;
  std::uint64_t seed = 0;
};

/// Non-finite loss or parameters during training.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss
  double val_mjc = 0.0;
  bool improved = false;
};

struct TrainResult {
  InsetParams best;
  double best_val = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  Checkpoint last;  // final parameters with resumable progress
};

using EpochCallback = std::function<void(const EpochLog&, const Checkpoint&)>;

/// Mini-batch Adam with early stopping on validation MJC. Every random draw is
/// keyed by (seed, epoch, sample), so resuming from `resume` replays the
/// remaining epochs exactly.
inline TrainResult train(InsetParams params, const std::vector<SetSample>& train_set,
                         const std::vector<SetSample>& val_set, const TrainConfig& cfg,
                         std::optional<TrainProgress> resume = std::nullopt,
                         const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
  params.validate();

  TrainProgress prog;
  if (resume) {
    prog = std::move(*resume);
  } else {
    prog.adam = AdamState(cfg.adam);
    prog.best = params;
  }

  std::vector<Tensor> grads;
  for (const Tensor* t : params.tensors()) grads.emplace_back(t->rows(), t->cols());

  std::size_t epochs_run = 0;
  for (std::size_t epoch = prog.next_epoch; epoch < cfg.max_epochs; ++epoch) {
    if (prog.stale_epochs >= cfg.patience && epoch > 0) break;
    Rng batch_rng = make_rng(cfg.seed, Stream::Batch, epoch);
    const auto order = random_permutation(train_set.size(), batch_rng);
    std::vector<double> losses;
    losses.reserve(train_set.size());

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (Tensor& g : grads) g.fill(0.0);
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t idx = order[j];
        Rng rng = make_rng(cfg.seed, Stream::Sampling, (std::uint64_t(epoch) << 32) | idx);
        Tape tape;
        const ParamVars pv = bind(tape, params);
        Var loss = training_loss(pv, params, train_set[idx], cfg.loss, rng);
        const double lv = loss.value().item();
        if (!std::isfinite(lv))
          throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch), epoch);
        losses.push_back(lv);
        tape.backward(loss);
        const auto vars = pv.vars();
        for (std::size_t k = 0; k < grads.size(); ++k) {
          const Tensor& g = vars[k]->grad();
          for (std::size_t i = 0; i < g.size(); ++i) grads[k][i] += g[i];
        }
      }
      const double inv = 1.0 / double(stop - start);
      for (Tensor& g : grads)
        for (double& v : g.values()) v *= inv;
      auto ts = params.tensors();
      adam_step(std::span<Tensor* const>(ts.data(), ts.size()), grads, prog.adam);
    }
    for (const Tensor* t : params.tensors())
      if (!t->all_finite())
        throw NumericalError("non-finite parameters after epoch " + std::to_string(epoch), epoch);

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = canonical_sum(losses) / double(losses.size());
    log.val_mjc = evaluate_model(params, cfg.loss.mode, val_set, cfg.n_out, cfg.inference).mean;
    if (log.val_mjc > prog.best_val) {
      prog.best_val = log.val_mjc;
      prog.best = params;
      prog.best_epoch = std::uint32_t(epoch);
      prog.stale_epochs = 0;
      log.improved = true;
    } else {
      ++prog.stale_epochs;
    }
    prog.next_epoch = std::uint32_t(epoch + 1);
    ++epochs_run;
    if (on_epoch) on_epoch(log, Checkpoint{params, cfg.loss.mode, prog});
  }

  TrainResult res;
  res.best = prog.best;
  res.best_val = prog.best_val;
  res.best_epoch = prog.best_epoch;
  res.epochs_run = epochs_run;
  res.last = Checkpoint{std::move(params), cfg.loss.mode, std::move(prog)};
  return res;
}

}  // namespace inset
