#pragma once

#include <string>
#include <vector>

#include "synformer/autograd.hpp"
#include "synformer/encoder.hpp"
#include "synformer/params.hpp"

namespace synformer {

// Intent: a linear classifier on the final-layer SOS embedding.
template <typename S>
struct IntentHead {
  Parameter<S>* w = nullptr;
  Parameter<S>* b = nullptr;

  static IntentHead reg(ParamStore<S>& store, int d_model, int n_intents, Rng& rng) {
    IntentHead h;
    h.w = &store.add("intent.w", init_xavier<S>(d_model, n_intents, rng));
    h.b = &store.add("intent.b", Tensor<S>(1, n_intents));
    return h;
  }

  Expr<S> logits(Graph<S>& g, Expr<S> final_states) const {
    return add_rowvec(matmul(select_row(final_states, 0), g.leaf(*w)), g.leaf(*b));
  }
};

// Token classifier: one hidden layer of width d_model, then linear to the label
// space. Used for both slot filling (on the final layer) and POS tagging (on
// the tap layer).
template <typename S>
struct TokenHead {
  Parameter<S>* w1 = nullptr;
  Parameter<S>* b1 = nullptr;
  Parameter<S>* w2 = nullptr;
  Parameter<S>* b2 = nullptr;

  static TokenHead reg(ParamStore<S>& store, const std::string& prefix, int d_model,
                       int n_labels, Rng& rng) {
    TokenHead h;
    h.w1 = &store.add(prefix + ".w1", init_xavier<S>(d_model, d_model, rng));
    h.b1 = &store.add(prefix + ".b1", Tensor<S>(1, d_model));
    h.w2 = &store.add(prefix + ".w2", init_xavier<S>(d_model, n_labels, rng));
    h.b2 = &store.add(prefix + ".b2", Tensor<S>(1, n_labels));
    return h;
  }

  // states: (P x d_model); token_rows selects the real-token rows (1..T).
  Expr<S> logits(Graph<S>& g, Expr<S> states, const std::vector<int>& token_rows,
                 const EncoderDims& dims) const {
    auto tokens = embedding_lookup(states, token_rows);
    auto hidden = activation(add_rowvec(matmul(tokens, g.leaf(*w1)), g.leaf(*b1)), dims);
    return add_rowvec(matmul(hidden, g.leaf(*w2)), g.leaf(*b2));
  }
};

enum class TaskMode { SlotOnly, IntentOnly, Joint };

inline TaskMode task_mode_from(const std::string& s) {
  if (s == "sf") return TaskMode::SlotOnly;
  if (s == "id") return TaskMode::IntentOnly;
  if (s == "joint") return TaskMode::Joint;
  throw ConfigError("mode must be joint, sf, or id");
}

}  // namespace synformer
