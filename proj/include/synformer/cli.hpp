#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "synformer/attention_export.hpp"
#include "synformer/checkpoint.hpp"
#include "synformer/config.hpp"
#include "synformer/corpus.hpp"
#include "synformer/model.hpp"
#include "synformer/synthetic.hpp"
#include "synformer/trainer.hpp"

namespace synformer {

// A checkpoint rehydrated into a runnable model: config, vocabulary, label
// spaces, and parameters all come from the container, never from the dataset,
// so evaluation and prediction reproduce the training-time setup exactly.
struct LoadedModel {
  Config cfg;
  Vocab vocab;
  LabelSpaces spaces;
  Checkpoint ckpt;
  std::unique_ptr<Model<float>> model;
};

inline LoadedModel load_model(const std::string& ckpt_path) {
  LoadedModel lm;
  lm.ckpt = load_checkpoint(ckpt_path);
  lm.cfg.load_string(lm.ckpt.config_text);
  lm.vocab = vocab_from_tokens(lm.ckpt.vocab_tokens);
  lm.spaces = spaces_from_checkpoint(lm.ckpt);
  Tensor<float> vecs(lm.vocab.size(), lm.cfg.get_int("embed.word_dim"));
  lm.model = std::make_unique<Model<float>>(
      lm.cfg, vecs, lm.spaces.num_slots(), lm.spaces.num_intents(), lm.spaces.num_pos(),
      static_cast<uint64_t>(lm.cfg.get_int("seed")));
  restore_params(lm.model->store, lm.ckpt.params);
  return lm;
}

// Raw prediction input: one space-separated utterance per line, tokens only.
inline std::vector<Utterance> load_raw_input(const std::string& path) {
  auto lines = read_lines(path);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  std::vector<Utterance> out;
  for (size_t i = 0; i < lines.size(); ++i) {
    Utterance u;
    u.tokens = split_ws(lines[i]);
    if (u.tokens.empty())
      throw DataError(path + " line " + std::to_string(i + 1) + ": empty utterance");
    out.push_back(std::move(u));
  }
  if (out.empty()) throw DataError(path + ": no input utterances");
  return out;
}

inline Config load_run_config(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
  Config cfg;
  if (!config_path.empty()) cfg.load_file(resolve_config_path(config_path));
  cfg.apply_overrides(overrides);
  cfg.validate();
  return cfg;
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  Config cfg = load_run_config(config_path, overrides);
  std::string run = cfg.get_string("run.dir");
  std::filesystem::create_directories(run + "/attn");

  std::string data = cfg.get_string("data.dir");
  auto train_set = load_split(data + "/" + cfg.get_string("data.train"));
  auto valid_set = load_split(data + "/" + cfg.get_string("data.valid"));
  auto test_set = load_split(data + "/" + cfg.get_string("data.test"));

  {
    std::ofstream rc(run + "/config.resolved", std::ios::trunc);
    if (!rc) throw DataError("cannot write " + run + "/config.resolved");
    rc << cfg.resolved();
  }
  std::ofstream log(run + "/metrics.log", std::ios::trunc);
  if (!log) throw DataError("cannot write " + run + "/metrics.log");

  TrainResult result = train_model<float>(cfg, train_set, valid_set, log, run + "/best.ckpt");
  if (!result.has_best) throw NumericError("training produced no usable checkpoint");

  // score the persisted best checkpoint on the test split
  LoadedModel best = load_model(run + "/best.ckpt");
  EvalReport test_report = evaluate_model(*best.model, test_set, best.vocab, best.spaces,
                                          cfg.get_int("train.batch_size"));
  {
    std::ofstream rep(run + "/report.txt", std::ios::trunc);
    if (!rep) throw DataError("cannot write " + run + "/report.txt");
    rep << "selection=" << result.best.selection_metric
        << " best_epoch=" << result.best.best_epoch
        << " best_value=" << detail::fmt(result.best.best_value) << "\n\n"
        << "validation:\n" << result.best_report.to_text() << "\n"
        << "test:\n" << test_report.to_text();
  }
  std::cout << "best epoch " << result.best.best_epoch << " ("
            << result.best.selection_metric << "=" << detail::fmt(result.best.best_value)
            << ")\ntest:\n" << test_report.to_text();
  return 0;
}

inline int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir) {
  LoadedModel lm = load_model(ckpt_path);
  auto data = load_split(data_dir);
  EvalReport report = evaluate_model(*lm.model, data, lm.vocab, lm.spaces,
                                     lm.cfg.get_int("train.batch_size"));
  std::cout << report.to_text();
  return 0;
}

inline int cmd_predict(const std::string& ckpt_path, const std::string& input_path,
                       const std::string& output_path) {
  LoadedModel lm = load_model(ckpt_path);
  auto inputs = load_raw_input(input_path);
  auto tm = build_transitions(lm.spaces.slot_labels);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!output_path.empty() && output_path != "-") {
    file.open(output_path, std::ios::trunc);
    if (!file) throw DataError("cannot write '" + output_path + "'");
    os = &file;
  }
  for (const auto& u : inputs) {
    Batch batch = encode_batch({u}, lm.vocab, lm.spaces);
    Graph<float> g;
    auto pred = lm.model->predict(g, batch, 0, tm);
    *os << lm.spaces.intent_labels[pred.intent_id];
    for (size_t t = 0; t < pred.slot_ids.size(); ++t)
      *os << (t == 0 ? "\t" : " ") << lm.spaces.slot_labels[pred.slot_ids[t]];
    *os << "\n";
  }
  os->flush();
  return 0;
}

inline int cmd_dump_attention(const std::string& ckpt_path, const std::string& input_path,
                              const std::string& out_path) {
  LoadedModel lm = load_model(ckpt_path);
  auto inputs = load_raw_input(input_path);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw DataError("cannot write '" + out_path + "'");
  for (const auto& u : inputs) {
    Batch batch = encode_batch({u}, lm.vocab, lm.spaces);
    dump_attention_line(os, *lm.model, batch, 0, lm.vocab);
  }
  return 0;
}

inline int cmd_gen_toy(const std::string& out_dir, int train_count, int valid_count,
                       int test_count, uint64_t seed) {
  write_toy_corpus(out_dir, train_count, valid_count, test_count, seed);
  std::cout << "wrote " << train_count << "/" << valid_count << "/" << test_count
            << " utterances under " << out_dir << "\n";
  return 0;
}

}  // namespace synformer
