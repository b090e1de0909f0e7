#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "synformer/autograd.hpp"
#include "synformer/config.hpp"
#include "synformer/corpus.hpp"
#include "synformer/encoder.hpp"
#include "synformer/heads.hpp"
#include "synformer/syntax_prior.hpp"
#include "synformer/viterbi.hpp"

namespace synformer {

// The assembled network: input embedding (frozen word vectors + trained
// character features), the x/y/1/z encoder stack, and the task heads.
// Templated on the scalar so gradient checks run in 64-bit while training and
// checkpoints use 32-bit.
template <typename S>
class Model {
 public:
  EncoderDims dims;
  TaskMode mode = TaskMode::Joint;
  bool use_pos = true;
  double tau = 1.0;
  int prior_depth = 0;  // 0 = full ancestor chain
  double c_dep = 1.0, c_pos = 1.0;
  bool mean_reduction = true;
  int n_slots = 0, n_intents = 0, n_pos = 0;

  ParamStore<S> store;

  // word_vectors must be (vocab_size x embed.word_dim); it is stored frozen.
  Model(const Config& cfg, const Tensor<S>& word_vectors, int num_slots, int num_intents,
        int num_pos, uint64_t seed)
      : dims(EncoderDims::from_config(cfg)),
        mode(task_mode_from(cfg.get_string("mode"))),
        use_pos(cfg.get_bool("use_pos")),
        tau(cfg.get_double("prior.tau")),
        c_dep(cfg.get_double("loss.c_dep")),
        c_pos(cfg.get_double("loss.c_pos")),
        mean_reduction(cfg.get_string("loss.batch_reduction") == "mean"),
        n_slots(num_slots),
        n_intents(num_intents),
        n_pos(num_pos) {
    if (word_vectors.cols() != dims.word_dim)
      throw ConfigError("word-vector width does not match embed.word_dim");
    prior_depth = cfg.get_string("prior.mode") == "parent_only" ? 1
                                                                : cfg.get_int("prior.max_depth");
    if (use_pos && n_pos <= 0)
      throw DataError("use_pos=true but the label spaces contain no POS tags");

    Rng rng(seed);
    word_table_ = &store.add("embed.word", word_vectors, /*trainable=*/false);
    char_table_ = &store.add("embed.char",
                             init_uniform<S>(kCharVocabSize, dims.char_dim, rng, -0.1, 0.1));
    conv_w_ = &store.add("embed.conv.w",
                         init_xavier<S>(dims.char_window * dims.char_dim, dims.char_dim, rng));
    conv_b_ = &store.add("embed.conv.b", Tensor<S>(1, dims.char_dim));
    proj_w_ = &store.add("embed.proj.w",
                         init_xavier<S>(dims.word_dim + dims.char_dim, dims.d_model, rng));
    proj_b_ = &store.add("embed.proj.b", Tensor<S>(1, dims.d_model));
    for (int l = 1; l <= dims.layers; ++l) {
      bool syn = dims.use_dep && l == dims.syntactic;
      layers_.push_back(register_layer(store, "layer" + std::to_string(l), dims, syn, rng));
    }
    intent_ = IntentHead<S>::reg(store, dims.d_model, n_intents, rng);
    slot_ = TokenHead<S>::reg(store, "slot", dims.d_model, n_slots, rng);
    if (use_pos) pos_ = TokenHead<S>::reg(store, "pos", dims.d_model, n_pos, rng);
  }

  struct EncodeOut {
    Expr<S> final;  // layer-L states, (P x d_model)
    Expr<S> tap;    // layer-r states for the POS head
    Expr<S> w_s;    // supervised head's attention, valid when has_ws
    bool has_ws = false;
    std::vector<std::vector<Expr<S>>> attn;  // [layer][head], post-softmax
  };

  EncodeOut encode(Graph<S>& g, const Batch& batch, int b) const {
    int p = batch.positions();
    int len = batch.length[b];

    // word-vector rows for SOS + tokens (+ PAD)
    std::vector<int> ids(p);
    for (int j = 0; j < p; ++j) ids[j] = batch.token_id(b, j);
    auto word_emb = embedding_lookup(g.leaf(*word_table_), ids);

    // character features: embed byte windows, convolve, max-pool per token
    int w = dims.char_window;
    int pad_left = (w - 1) / 2;
    std::vector<int> window_ids;
    std::vector<std::pair<int, int>> segments;
    std::vector<int> target_rows;
    for (int t = 0; t < len; ++t) {
      int c_len = batch.char_len[static_cast<size_t>(b) * batch.t_max + t];
      int begin = static_cast<int>(window_ids.size()) / w;
      for (int c = 0; c < c_len; ++c)
        for (int k = 0; k < w; ++k) {
          int idx = c - pad_left + k;
          window_ids.push_back(idx >= 0 && idx < c_len ? batch.char_id(b, t, idx) : 0);
        }
      segments.emplace_back(begin, begin + c_len);
      target_rows.push_back(1 + t);
    }
    auto flat = embedding_lookup(g.leaf(*char_table_), window_ids);
    auto windows = reshape(flat, static_cast<int>(window_ids.size()) / w, w * dims.char_dim);
    auto conv = activation(
        add_rowvec(matmul(windows, g.leaf(*conv_w_)), g.leaf(*conv_b_)), dims);
    auto pooled = segment_max_rows(conv, segments);
    auto char_feat = scatter_rows(pooled, target_rows, p);  // SOS and PAD rows stay zero

    auto x = add_rowvec(
        matmul(concat_cols(std::vector<Expr<S>>{word_emb, char_feat}), g.leaf(*proj_w_)),
        g.leaf(*proj_b_));
    if (dims.positional) x = add(x, g.input(pe_matrix<S>(p, dims.d_model)));
    x = dropout(x, dims.dropout);

    std::vector<uint8_t> pm(p);
    for (int j = 0; j < p; ++j) pm[j] = batch.mask.at(b, j);
    Tensor<uint8_t> col_fill = column_fill_mask(pm);

    EncodeOut out;
    out.tap = x;  // pos_tap == 0 taps the embeddings themselves
    for (int l = 1; l <= dims.layers; ++l) {
      auto lo = run_layer(g, x, col_fill, layers_[l - 1], dims);
      x = lo.out;
      out.attn.push_back(lo.attn);
      if (lo.has_ws) {
        out.w_s = lo.w_s;
        out.has_ws = true;
      }
      if (l == dims.pos_tap) out.tap = x;
    }
    out.final = x;
    return out;
  }

  struct LossOut {
    Expr<S> total;
    double value = 0.0;
    double nlu = 0.0;
    double dep = 0.0;
    double pos = 0.0;
  };

  // Composite training loss over a batch: the NLU term per task mode plus the
  // weighted dependency and POS auxiliary terms. Intent CE is averaged over the
  // batch; slot/POS CE sum over tokens then batch-reduce; the dependency KL is
  // the token-weighted mean across the batch (exactly the per-utterance mean
  // for B=1). batch_reduction=sum drops every 1/B and 1/token normalizer.
  LossOut batch_loss(Graph<S>& g, const Batch& batch) const {
    bool want_dep = dims.use_dep && c_dep > 0.0;
    if (want_dep && !batch.has_heads)
      throw DataError("dependency supervision requires the heads sidecar");
    if (use_pos && c_pos > 0.0 && !batch.has_pos)
      throw DataError("POS supervision requires the pos sidecar");

    Expr<S> slot_sum, intent_sum, pos_sum, dep_sum;
    int dep_tokens = 0;
    for (int b = 0; b < batch.batch; ++b) {
      auto enc = encode(g, batch, b);
      int len = batch.length[b];
      std::vector<int> token_rows(len);
      for (int t = 0; t < len; ++t) token_rows[t] = 1 + t;

      if (mode != TaskMode::IntentOnly) {
        std::vector<int> gold(len);
        for (int t = 0; t < len; ++t)
          gold[t] = batch.slot_ids[static_cast<size_t>(b) * batch.t_max + t];
        auto ce = cross_entropy_rows(slot_.logits(g, enc.final, token_rows, dims), gold);
        slot_sum = slot_sum.valid() ? add(slot_sum, ce) : ce;
      }
      if (mode != TaskMode::SlotOnly) {
        auto ce = cross_entropy_rows(intent_.logits(g, enc.final), {batch.intent_ids[b]});
        intent_sum = intent_sum.valid() ? add(intent_sum, ce) : ce;
      }
      if (use_pos && c_pos > 0.0) {
        std::vector<int> gold(len);
        for (int t = 0; t < len; ++t)
          gold[t] = batch.pos_ids[static_cast<size_t>(b) * batch.t_max + t];
        auto ce = cross_entropy_rows(pos_.logits(g, enc.tap, token_rows, dims), gold);
        pos_sum = pos_sum.valid() ? add(pos_sum, ce) : ce;
      }
      if (want_dep) {
        auto prior = prior_matrix<S>(batch.heads[b], tau, prior_depth, batch.positions());
        auto kl = kl_div_rows(prior, enc.w_s, prior_row_mask(len, batch.positions()),
                              /*mean=*/false);
        dep_sum = dep_sum.valid() ? add(dep_sum, kl) : kl;
        dep_tokens += len;
      }
    }

    S inv_b = static_cast<S>(1.0 / batch.batch);
    auto reduce = [&](Expr<S> e) { return mean_reduction ? scale(e, inv_b) : e; };
    LossOut out;
    Expr<S> total;
    // Logged part values are pre-coefficient; the coefficient enters the total.
    auto accumulate = [&](Expr<S> part, double coeff, double* logged) {
      if (logged) *logged = static_cast<double>(part.value().data[0]);
      if (coeff != 1.0) part = scale(part, static_cast<S>(coeff));
      total = total.valid() ? add(total, part) : part;
    };
    double nlu_slot = 0.0, nlu_intent = 0.0;
    if (slot_sum.valid()) accumulate(reduce(slot_sum), 1.0, &nlu_slot);
    if (intent_sum.valid()) accumulate(reduce(intent_sum), 1.0, &nlu_intent);
    out.nlu = nlu_slot + nlu_intent;
    if (pos_sum.valid()) accumulate(reduce(pos_sum), c_pos, &out.pos);
    if (dep_sum.valid()) {
      Expr<S> dep = mean_reduction && dep_tokens > 0
                        ? scale(dep_sum, static_cast<S>(1.0 / dep_tokens))
                        : dep_sum;
      accumulate(dep, c_dep, &out.dep);
    }
    if (!total.valid()) total = g.input(Tensor<S>(1, 1));
    out.total = total;
    out.value = static_cast<double>(total.value().data[0]);
    if (!std::isfinite(out.value)) throw NumericError("training loss is not finite");
    return out;
  }

  struct Prediction {
    int intent_id = 0;
    std::vector<int> slot_ids;
  };

  // Greedy intent + Viterbi-constrained slots. Runs with dropout off; callers
  // pass an eval graph (training=false).
  Prediction predict(Graph<S>& g, const Batch& batch, int b,
                     const TransitionMatrix& tm) const {
    auto enc = encode(g, batch, b);
    int len = batch.length[b];
    std::vector<int> token_rows(len);
    for (int t = 0; t < len; ++t) token_rows[t] = 1 + t;

    Prediction pred;
    // copy: growing the graph later may reallocate the node arena
    Tensor<S> intent_logits = intent_.logits(g, enc.final).value();
    for (int j = 1; j < n_intents; ++j)
      if (intent_logits.at(0, j) > intent_logits.at(0, pred.intent_id)) pred.intent_id = j;

    Tensor<S> slot_logits = slot_.logits(g, enc.final, token_rows, dims).value();
    Tensor<double> log_probs(len, n_slots);
    for (int t = 0; t < len; ++t) {
      double mx = static_cast<double>(slot_logits.at(t, 0));
      for (int j = 1; j < n_slots; ++j)
        mx = std::max(mx, static_cast<double>(slot_logits.at(t, j)));
      double sum = 0.0;
      for (int j = 0; j < n_slots; ++j)
        sum += std::exp(static_cast<double>(slot_logits.at(t, j)) - mx);
      double lse = mx + std::log(sum);
      for (int j = 0; j < n_slots; ++j)
        log_probs.at(t, j) = static_cast<double>(slot_logits.at(t, j)) - lse;
    }
    pred.slot_ids = viterbi(log_probs, tm).labels;
    return pred;
  }

  const IntentHead<S>& intent_head() const { return intent_; }
  const TokenHead<S>& slot_head() const { return slot_; }
  const TokenHead<S>& pos_head() const { return pos_; }

 private:
  Parameter<S>* word_table_ = nullptr;
  Parameter<S>* char_table_ = nullptr;
  Parameter<S>* conv_w_ = nullptr;
  Parameter<S>* conv_b_ = nullptr;
  Parameter<S>* proj_w_ = nullptr;
  Parameter<S>* proj_b_ = nullptr;
  std::vector<LayerParams<S>> layers_;
  IntentHead<S> intent_;
  TokenHead<S> slot_;
  TokenHead<S> pos_;
};

}  // namespace synformer
