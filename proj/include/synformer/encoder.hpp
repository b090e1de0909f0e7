#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "synformer/autograd.hpp"
#include "synformer/config.hpp"
#include "synformer/params.hpp"

namespace synformer {

// Architecture hyperparameters, resolved once from Config. Layers are arranged
// x standard, y standard, 1 syntactically-supervised, z standard; the POS head
// taps the output of layer r = x and the NLU heads read layer L.
struct EncoderDims {
  int d_model = 0, d_ff = 0, heads = 0, d_k = 0, d_biaffine = 0;
  int x = 0, y = 0, z = 0, layers = 0, syntactic = 0, pos_tap = 0;
  double dropout = 0.0;
  bool use_dep = true;
  bool gelu_act = false;
  bool positional = true;
  int word_dim = 0, char_dim = 0, char_window = 0;

  static EncoderDims from_config(const Config& cfg) {
    EncoderDims d;
    d.d_model = cfg.get_int("model.d_model");
    d.d_ff = cfg.get_int("model.d_ff");
    d.heads = cfg.get_int("model.heads");
    d.d_k = d.d_model / d.heads;
    d.d_biaffine = cfg.get_int("model.d_biaffine");
    d.x = cfg.get_int("model.x");
    d.y = cfg.get_int("model.y");
    d.z = cfg.get_int("model.z");
    d.layers = d.x + d.y + 1 + d.z;
    d.syntactic = d.x + d.y + 1;
    d.pos_tap = d.x;
    d.dropout = cfg.get_double("model.dropout");
    d.use_dep = cfg.get_bool("use_dep");
    d.gelu_act = cfg.get_string("model.activation") == "gelu";
    d.positional = cfg.get_bool("embed.positional");
    d.word_dim = cfg.get_int("embed.word_dim");
    d.char_dim = cfg.get_int("embed.char_dim");
    d.char_window = cfg.get_int("embed.char_window");
    return d;
  }
};

template <typename S>
Expr<S> activation(Expr<S> x, const EncoderDims& dims) {
  return dims.gelu_act ? gelu(x) : relu(x);
}

// Fixed sinusoidal position signal, added to the projected input embeddings.
template <typename S>
Tensor<S> pe_matrix(int positions, int d_model) {
  Tensor<S> pe(positions, d_model);
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < d_model; i += 2) {
      double freq = std::pow(10000.0, -static_cast<double>(i) / d_model);
      pe.at(p, i) = static_cast<S>(std::sin(p * freq));
      if (i + 1 < d_model) pe.at(p, i + 1) = static_cast<S>(std::cos(p * freq));
    }
  }
  return pe;
}

// Cell mask for attention scores: 1 where the *column* position is padding, so
// masked_fill can force those scores to -inf before the row softmax.
inline Tensor<uint8_t> column_fill_mask(const std::vector<uint8_t>& position_mask) {
  int p = static_cast<int>(position_mask.size());
  Tensor<uint8_t> fill(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) fill.at(i, j) = position_mask[j] ? 0 : 1;
  return fill;
}

template <typename S>
struct LayerParams {
  // per head: query/key/value projections (d_model x d_k)
  std::vector<Parameter<S>*> wq, wk, wv;
  // syntactic head replacements for head 0 (only on the supervised layer):
  // d_model x d_biaffine projections and the bilinear form between them
  Parameter<S>* syn_wq = nullptr;
  Parameter<S>* syn_wk = nullptr;
  Parameter<S>* syn_u = nullptr;
  Parameter<S>* wo = nullptr;  // d_model x d_model
  Parameter<S>* bo = nullptr;
  Parameter<S>* ln1_g = nullptr;
  Parameter<S>* ln1_b = nullptr;
  Parameter<S>* ffn_w1 = nullptr;
  Parameter<S>* ffn_b1 = nullptr;
  Parameter<S>* ffn_w2 = nullptr;
  Parameter<S>* ffn_b2 = nullptr;
  Parameter<S>* ln2_g = nullptr;
  Parameter<S>* ln2_b = nullptr;

  bool syntactic() const { return syn_u != nullptr; }
};

template <typename S>
LayerParams<S> register_layer(ParamStore<S>& store, const std::string& prefix,
                              const EncoderDims& dims, bool syntactic, Rng& rng) {
  LayerParams<S> lp;
  for (int h = 0; h < dims.heads; ++h) {
    std::string hp = prefix + ".head" + std::to_string(h);
    bool syn_head = syntactic && h == 0;
    if (syn_head) {
      lp.syn_wq = &store.add(prefix + ".syn.wq",
                             init_xavier<S>(dims.d_model, dims.d_biaffine, rng));
      lp.syn_wk = &store.add(prefix + ".syn.wk",
                             init_xavier<S>(dims.d_model, dims.d_biaffine, rng));
      lp.syn_u = &store.add(prefix + ".syn.u",
                            init_xavier<S>(dims.d_biaffine, dims.d_biaffine, rng));
      lp.wq.push_back(nullptr);
      lp.wk.push_back(nullptr);
    } else {
      lp.wq.push_back(&store.add(hp + ".wq", init_xavier<S>(dims.d_model, dims.d_k, rng)));
      lp.wk.push_back(&store.add(hp + ".wk", init_xavier<S>(dims.d_model, dims.d_k, rng)));
    }
    lp.wv.push_back(&store.add(hp + ".wv", init_xavier<S>(dims.d_model, dims.d_k, rng)));
  }
  lp.wo = &store.add(prefix + ".wo", init_xavier<S>(dims.d_model, dims.d_model, rng));
  lp.bo = &store.add(prefix + ".bo", Tensor<S>(1, dims.d_model));
  lp.ln1_g = &store.add(prefix + ".ln1.g", init_ones<S>(1, dims.d_model));
  lp.ln1_b = &store.add(prefix + ".ln1.b", Tensor<S>(1, dims.d_model));
  lp.ffn_w1 = &store.add(prefix + ".ffn.w1", init_xavier<S>(dims.d_model, dims.d_ff, rng));
  lp.ffn_b1 = &store.add(prefix + ".ffn.b1", Tensor<S>(1, dims.d_ff));
  lp.ffn_w2 = &store.add(prefix + ".ffn.w2", init_xavier<S>(dims.d_ff, dims.d_model, rng));
  lp.ffn_b2 = &store.add(prefix + ".ffn.b2", Tensor<S>(1, dims.d_model));
  lp.ln2_g = &store.add(prefix + ".ln2.g", init_ones<S>(1, dims.d_model));
  lp.ln2_b = &store.add(prefix + ".ln2.b", Tensor<S>(1, dims.d_model));
  return lp;
}

// Output of one encoder layer: the transformed sequence, the per-head attention
// matrices (post-softmax, pre-dropout), and the supervised head's matrix when
// this is the syntactic layer.
template <typename S>
struct LayerOut {
  Expr<S> out;
  std::vector<Expr<S>> attn;
  Expr<S> w_s;
  bool has_ws = false;
};

template <typename S>
LayerOut<S> run_layer(Graph<S>& g, Expr<S> x, const Tensor<uint8_t>& col_fill,
                      const LayerParams<S>& lp, const EncoderDims& dims) {
  LayerOut<S> lo;
  const S neg_inf = -std::numeric_limits<S>::infinity();
  std::vector<Expr<S>> mixed;
  for (int h = 0; h < dims.heads; ++h) {
    Expr<S> weights;
    if (lp.syntactic() && h == 0) {
      // biaffine scores: Q U K^T, unscaled and bias-free
      auto q = matmul(x, g.leaf(*lp.syn_wq));
      auto k = matmul(x, g.leaf(*lp.syn_wk));
      auto scores = matmul_nt(matmul(q, g.leaf(*lp.syn_u)), k);
      weights = softmax_rows(masked_fill(scores, col_fill, neg_inf));
      lo.w_s = weights;
      lo.has_ws = true;
    } else {
      auto q = matmul(x, g.leaf(*lp.wq[h]));
      auto k = matmul(x, g.leaf(*lp.wk[h]));
      auto scores = scale(matmul_nt(q, k), static_cast<S>(1.0 / std::sqrt(double(dims.d_k))));
      weights = softmax_rows(masked_fill(scores, col_fill, neg_inf));
    }
    lo.attn.push_back(weights);
    auto v = matmul(x, g.leaf(*lp.wv[h]));
    mixed.push_back(matmul(dropout(weights, dims.dropout), v));
  }
  auto multi = add_rowvec(matmul(concat_cols(mixed), g.leaf(*lp.wo)), g.leaf(*lp.bo));
  auto x1 = layer_norm(add(x, dropout(multi, dims.dropout)), g.leaf(*lp.ln1_g), g.leaf(*lp.ln1_b));
  auto hidden = activation(add_rowvec(matmul(x1, g.leaf(*lp.ffn_w1)), g.leaf(*lp.ffn_b1)), dims);
  auto ffn = add_rowvec(matmul(dropout(hidden, dims.dropout), g.leaf(*lp.ffn_w2)),
                        g.leaf(*lp.ffn_b2));
  lo.out = layer_norm(add(x1, dropout(ffn, dims.dropout)), g.leaf(*lp.ln2_g), g.leaf(*lp.ln2_b));
  return lo;
}

}  // namespace synformer
