#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "synformer/checkpoint.hpp"
#include "synformer/config.hpp"
#include "synformer/corpus.hpp"
#include "synformer/metrics.hpp"
#include "synformer/model.hpp"
#include "synformer/optim.hpp"

namespace synformer {

// Decodes every utterance with dropout off and scores string-level metrics.
// Gold tags/intents are compared as strings, so labels unseen in training
// simply never match a prediction instead of crashing the id lookup.
template <typename S>
EvalReport evaluate_model(const Model<S>& model, const std::vector<Utterance>& data,
                          const Vocab& vocab, const LabelSpaces& spaces, int batch_size) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  auto tm = build_transitions(spaces.slot_labels);
  std::vector<std::vector<std::string>> slot_preds, slot_golds;
  std::vector<std::string> intent_preds, intent_golds;
  for (size_t begin = 0; begin < data.size(); begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(data.size(), begin + static_cast<size_t>(batch_size));
    std::vector<Utterance> chunk(data.begin() + begin, data.begin() + end);
    Batch batch = encode_batch(chunk, vocab, spaces);
    for (int b = 0; b < batch.batch; ++b) {
      Graph<S> g;  // training=false: no dropout at inference
      auto pred = model.predict(g, batch, b, tm);
      std::vector<std::string> tags;
      for (int id : pred.slot_ids) tags.push_back(spaces.slot_labels[id]);
      slot_preds.push_back(std::move(tags));
      slot_golds.push_back(chunk[b].slots);
      intent_preds.push_back(spaces.intent_labels[pred.intent_id]);
      intent_golds.push_back(chunk[b].intent);
    }
  }
  return evaluate_corpus(slot_preds, slot_golds, intent_preds, intent_golds);
}

inline std::string resolve_selection(const Config& cfg) {
  std::string sel = cfg.get_string("train.selection");
  if (sel == "auto") {
    std::string mode = cfg.get_string("mode");
    if (mode == "sf") return "slot_f1";
    if (mode == "id") return "intent_acc";
    return "slot_f1+intent_acc";
  }
  if (sel != "slot_f1" && sel != "intent_acc" && sel != "slot_f1+intent_acc")
    throw ConfigError("train.selection must be auto, slot_f1, intent_acc, or slot_f1+intent_acc");
  return sel;
}

inline double selection_value(const std::string& selection, const EvalReport& r) {
  if (selection == "slot_f1") return r.slots.f1;
  if (selection == "intent_acc") return r.id_m;
  return r.slots.f1 + r.id_m;
}

struct TrainResult {
  Checkpoint best;
  EvalReport best_report;
  int epochs_run = 0;
  long long steps_run = 0;
  bool has_best = false;
};

namespace detail {

// Fixed-width numeric formatting so per-epoch log lines are reproducible
// byte-for-byte across runs with the same inputs.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

// Full optimization loop. Per epoch: shuffled minibatches, one AdamW step per
// batch under the warmup/cosine schedule, then validation and best-checkpoint
// selection. `log` receives one structured line per epoch (no timestamps).
// When ckpt_path is nonempty, every new best is persisted immediately, so a
// later divergence abort still leaves the last good checkpoint on disk.
template <typename S>
TrainResult train_model(const Config& cfg, const std::vector<Utterance>& train_set,
                        const std::vector<Utterance>& valid_set, std::ostream& log,
                        const std::string& ckpt_path = "") {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (valid_set.empty()) throw DataError("train: empty validation set");

  bool need_heads = cfg.get_bool("use_dep") && cfg.get_double("loss.c_dep") > 0.0;
  bool need_pos = cfg.get_bool("use_pos") && cfg.get_double("loss.c_pos") > 0.0;
  for (size_t i = 0; i < train_set.size(); ++i) {
    if (need_heads && !train_set[i].has_heads())
      throw DataError("train: use_dep needs the heads sidecar (missing at utterance " +
                      std::to_string(i + 1) + ")");
    if (need_pos && !train_set[i].has_pos())
      throw DataError("train: use_pos needs the pos sidecar (missing at utterance " +
                      std::to_string(i + 1) + ")");
  }

  uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));
  Vocab vocab = build_vocab(train_set, cfg.get_int("data.min_count"));
  LabelSpaces spaces = build_label_spaces(train_set);
  Tensor<float> vectors = load_word_vectors(cfg.get_string("data.vectors"), vocab,
                                            cfg.get_int("embed.word_dim"), seed);
  Model<S> model(cfg, vectors.template cast<S>(), spaces.num_slots(), spaces.num_intents(),
                 spaces.num_pos(), seed);

  int batch_size = cfg.get_int("train.batch_size");
  int epochs = cfg.get_int("train.epochs");
  long long batches = (static_cast<long long>(train_set.size()) + batch_size - 1) / batch_size;
  long long total_steps = batches * epochs;
  long long warmup = cfg.get_int("train.warmup_steps") > 0
                         ? cfg.get_int("train.warmup_steps")
                         : default_warmup(total_steps);
  double peak_lr = cfg.get_double("train.lr");
  double clip = cfg.get_double("train.clip_norm");
  bool shuffle = cfg.get_bool("train.shuffle");
  lr_at(1, warmup, total_steps, peak_lr);  // fail fast on a broken schedule

  AdamW<S> opt(model.store, cfg.get_double("train.weight_decay"),
               cfg.get_double("train.beta1"), cfg.get_double("train.beta2"),
               cfg.get_double("train.eps"));
  std::string selection = resolve_selection(cfg);

  TrainResult result;
  double best_value = -std::numeric_limits<double>::infinity();
  Rng order_rng(seed ^ 0x9e3779b97f4a7c15ull);  // batching stream, separate from init
  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  long long step = 0;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    if (shuffle) shuffle_vec(order, order_rng);
    double ep_loss = 0, ep_nlu = 0, ep_dep = 0, ep_pos = 0;
    double lr = 0.0;
    for (long long bi = 0; bi < batches; ++bi) {
      std::vector<Utterance> chunk;
      for (long long k = bi * batch_size;
           k < std::min<long long>((bi + 1) * batch_size, order.size()); ++k)
        chunk.push_back(train_set[order[k]]);
      Batch batch = encode_batch(chunk, vocab, spaces);

      model.store.zero_grads();
      Graph<S> g;
      g.training = true;
      g.rng = Rng(seed + 0x51ed2701u + static_cast<uint64_t>(step));  // dropout stream
      auto loss = model.batch_loss(g, batch);
      g.backward(loss.total);
      if (clip > 0.0) clip_gradients(model.store, clip);
      ++step;
      lr = lr_at(step, warmup, total_steps, peak_lr);
      opt.step(lr);
      ep_loss += loss.value;
      ep_nlu += loss.nlu;
      ep_dep += loss.dep;
      ep_pos += loss.pos;
    }
    double inv = 1.0 / static_cast<double>(batches);

    EvalReport report = evaluate_model(model, valid_set, vocab, spaces, batch_size);
    double value = selection_value(selection, report);
    bool improved = value > best_value;
    if (improved) {
      best_value = value;
      result.best.config_text = cfg.resolved();
      result.best.vocab_tokens = vocab_tokens(vocab);
      result.best.slot_labels = spaces.slot_labels;
      result.best.intent_labels = spaces.intent_labels;
      result.best.pos_labels = spaces.pos_labels;
      result.best.selection_metric = selection;
      result.best.best_value = value;
      result.best.best_epoch = epoch;
      result.best.params = snapshot_params(model.store);
      result.best_report = report;
      result.has_best = true;
      if (!ckpt_path.empty()) save_checkpoint(ckpt_path, result.best);
    }

    using detail::fmt;
    log << "epoch=" << epoch << " step=" << step << " lr=" << fmt(lr)
        << " loss=" << fmt(ep_loss * inv) << " nlu=" << fmt(ep_nlu * inv)
        << " dep=" << fmt(ep_dep * inv) << " pos=" << fmt(ep_pos * inv)
        << " val_slot_f1=" << fmt(report.slots.f1) << " val_id_s=" << fmt(report.id_s)
        << " val_id_m=" << fmt(report.id_m) << " best=" << (improved ? 1 : 0) << "\n";
    log.flush();
    result.epochs_run = epoch;
    result.steps_run = step;
  }
  return result;
}

}  // namespace synformer
