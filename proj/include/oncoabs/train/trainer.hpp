#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/evalx/metrics.hpp"
#include "oncoabs/model/checkpoint.hpp"
#include "oncoabs/model/han.hpp"
#include "oncoabs/model/mlm.hpp"
#include "oncoabs/numcore/adam.hpp"
#include "oncoabs/train/datasets.hpp"

namespace oncoabs::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;  // global gradient L2 norm; 0 disables
  double weight_decay = 0.0;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs", "must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size", "must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
    if (clip_norm < 0.0) throw ConfigError("clip_norm", "must be non-negative");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_metric = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

template <typename T>
struct TrainResult {
  model::HanModel<T> model;  // parameters of the best dev epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_dev_metric = 0.0;
  std::string stop_reason;
};

using DevMetric = std::function<double(const evalx::ProbabilityMatrix&, const std::vector<std::size_t>&)>;

inline DevMetric macro_auprc(std::size_t n_classes) {
  return [n_classes](const evalx::ProbabilityMatrix& p, const std::vector<std::size_t>& y) {
    return evalx::macro_ovr(evalx::BinaryMetric::Auprc, p, y, n_classes);
  };
}

using EpochLogger = std::function<void(const EpochRecord&)>;

template <typename T, typename E>
evalx::ProbabilityMatrix predict_all(const model::HanModel<T>& m, const std::vector<E>& examples) {
  evalx::ProbabilityMatrix out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(m.predict(e.tokens).probabilities);
  return out;
}

template <typename E>
std::vector<std::size_t> labels_of(const std::vector<E>& examples) {
  std::vector<std::size_t> y;
  y.reserve(examples.size());
  for (const auto& e : examples) y.push_back(e.label);
  return y;
}

namespace detail {

template <typename T>
double clip_gradients(num::ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.grad.size(); ++i) sq += static_cast<double>(p.grad[i]) * static_cast<double>(p.grad[i]);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] *= s;
  }
  return norm;
}

template <typename T>
void scale_gradients(num::ParameterSet<T>& params, T s) {
  for (auto& p : params)
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] *= s;
}

template <typename T>
std::vector<num::Tensor<T>> snapshot(const num::ParameterSet<T>& params) {
  std::vector<num::Tensor<T>> v;
  for (const auto& p : params) v.push_back(p.value);
  return v;
}

template <typename T>
void restore(num::ParameterSet<T>& params, const std::vector<num::Tensor<T>>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) params[i].value = v[i];
}

}  // namespace detail

/// Mini-batch Adam with per-epoch seeded shuffling and early stopping on the
/// dev metric. The model seed is taken from `cfg.seed`. When `init` is given
/// its tensors (typically a pretrained encoder) overwrite the fresh
/// initialization before training.
template <typename T, typename E>
TrainResult<T> train_model(const TrainConfig& cfg, model::ModelConfig mcfg, const std::vector<E>& train_set,
                           const std::vector<E>& dev_set, DevMetric metric = {},
                           const model::LoadedCheckpoint* init = nullptr, std::uint64_t vocab_hash = 0,
                           const EpochLogger& log = {}) {
  cfg.validate();
  if (train_set.empty()) throw EmptyInputError("empty training set");
  if (dev_set.empty()) throw EmptyInputError("empty dev set");
  check_disjoint(train_set, dev_set);
  for (const auto* set : {&train_set, &dev_set})
    for (const auto& e : *set)
      if (e.label >= mcfg.n_classes) throw DimensionError("example label outside the model's classes");
  if (!metric) metric = macro_auprc(mcfg.n_classes);

  mcfg.seed = cfg.seed;
  TrainResult<T> r{model::HanModel<T>(mcfg), {}, 0, -1.0, ""};
  auto& m = r.model;
  if (init) model::load_weights(m, *init, vocab_hash);
  m.set_dropout_seed(cfg.seed * 0x9e3779b97f4a7c15ULL + 17);
  num::AdamState<T> adam(m.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng shuffle_rng(cfg.seed ^ 0x51af1e5ULL);
  const auto dev_labels = labels_of(dev_set);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto best = detail::snapshot(m.parameters());
  std::size_t since_best = 0;
  r.stop_reason = "epoch limit";
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      m.parameters().zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const auto& ex = train_set[order[k]];
        num::Tape<T> tape;
        auto loss = m.loss(tape, ex.tokens, ex.label, model::Mode::Train);
        loss_sum += static_cast<double>(loss.value()[0]);
        tape.backward(loss);
      }
      detail::scale_gradients(m.parameters(), static_cast<T>(1.0 / static_cast<double>(e - b)));
      detail::clip_gradients(m.parameters(), cfg.clip_norm);
      num::adam_step(m.parameters(), adam);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.dev_metric = metric(predict_all(m, dev_set), dev_labels);
    rec.improved = rec.dev_metric > r.best_dev_metric;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.history.push_back(rec);
    if (log) log(rec);
    if (rec.improved) {
      r.best_dev_metric = rec.dev_metric;
      r.best_epoch = epoch;
      best = detail::snapshot(m.parameters());
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      r.stop_reason = "no dev improvement for " + std::to_string(since_best) + " epoch(s)";
      break;
    }
  }
  detail::restore(m.parameters(), best);
  m.parameters().zero_grad();
  return r;
}

inline nlohmann::ordered_json history_json(const std::vector<EpochRecord>& h, std::size_t best_epoch,
                                           double best_metric, const std::string& stop_reason) {
  nlohmann::ordered_json j;
  j["dev_metric"] = "macro-ovr auprc";
  j["best_epoch"] = best_epoch;
  j["best_dev_metric"] = best_metric;
  j["stop_reason"] = stop_reason;
  nlohmann::ordered_json eps = nlohmann::ordered_json::array();
  for (const auto& e : h)
    eps.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_metric", e.dev_metric}, {"improved", e.improved}});
  j["epochs"] = eps;
  return j;
}

// ---------------------------------------------------------------------------
// Masked-language-model pretraining

struct PretrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double mask_rate = 0.15;
  std::uint64_t seed = 1;
  std::size_t log_every = 100;
};

template <typename T>
struct PretrainResult {
  model::HanModel<T> model;
  std::vector<std::pair<std::size_t, double>> loss_log;  // (step, mean batch loss); step 0 is before any update
};

/// Token sequence for a standalone note.
inline text::TokenSequence note_input(const corpus::PoolNote& note, const text::Vocab& vocab) {
  corpus::Patient p;
  p.patient_id = note.note_id;
  p.documents.push_back({note.note_id, note.note_id, note.kind, 0, note.text});
  return text::assemble_input(p, {0, 0}, 0, corpus::KindSet::all(), vocab);
}

/// MLM training of the transformer encoder over an unlabeled pool. Each
/// step draws `batch_size` notes at random and corrupts them afresh.
template <typename T>
PretrainResult<T> pretrain_encoder(const PretrainConfig& cfg, model::ModelConfig mcfg,
                                   const std::vector<text::TokenSequence>& pool) {
  if (pool.empty()) throw EmptyInputError("pretraining pool is empty");
  if (mcfg.encoder != model::EncoderKind::TinyTransformer)
    throw UnsupportedError("pretraining needs the transformer encoder");
  if (cfg.batch_size == 0) throw ConfigError("batch_size", "must be at least 1");
  mcfg.seed = cfg.seed;
  PretrainResult<T> r{model::HanModel<T>(mcfg), {}};
  auto& m = r.model;
  m.set_dropout_seed(cfg.seed * 0x9e3779b97f4a7c15ULL + 29);
  num::AdamState<T> adam(m.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, 0.0});
  Rng rng(cfg.seed ^ 0x3a5cULL);
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    m.parameters().zero_grad();
    double loss_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const auto& seq = pool[rng.below(pool.size())];
      auto ex = model::mlm_corrupt(seq, cfg.mask_rate, rng, mcfg.vocab_size);
      num::Tape<T> tape(step < cfg.steps);
      auto loss = model::mlm_loss(m, tape, ex, step < cfg.steps ? model::Mode::Train : model::Mode::Eval);
      if (!loss) continue;
      loss_sum += static_cast<double>(loss->value()[0]);
      ++counted;
      if (step < cfg.steps) tape.backward(*loss);
    }
    const double mean = counted ? loss_sum / static_cast<double>(counted) : 0.0;
    if (step == 0 || step == cfg.steps || (cfg.log_every && step % cfg.log_every == 0)) r.loss_log.emplace_back(step, mean);
    if (step == cfg.steps || counted == 0) continue;
    detail::scale_gradients(m.parameters(), static_cast<T>(1.0 / static_cast<double>(counted)));
    detail::clip_gradients(m.parameters(), 5.0);
    num::adam_step(m.parameters(), adam);
  }
  m.parameters().zero_grad();
  return r;
}

}  // namespace oncoabs::train
