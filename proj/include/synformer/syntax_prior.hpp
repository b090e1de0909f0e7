#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "synformer/corpus.hpp"
#include "synformer/tensor.hpp"

namespace synformer {

// Ancestor chain of token i (1-indexed) in increasing distance order, ending at
// the tree's root token. The root token itself has an empty chain (its head is
// the artificial root, which is not a token).
inline std::vector<std::pair<int, int>> ancestors(const std::vector<int>& heads, int i) {
  int t = static_cast<int>(heads.size());
  if (i < 1 || i > t) throw DataError("ancestors: token index out of range");
  std::vector<std::pair<int, int>> chain;
  int cur = heads[i - 1], dist = 1;
  while (cur != 0) {
    chain.emplace_back(cur, dist);
    cur = heads[cur - 1];
    ++dist;
    if (dist > t + 1) throw DataError("ancestors: head links form a cycle");
  }
  return chain;
}

// Target attention distribution over [SOS + tokens]: row i places distance-
// decayed softmax weight on i's ancestors. The SOS column stands in for the
// artificial root, so the root token's row is a point mass there and every
// real-token row is a valid distribution. The SOS row itself is an all-zero
// sentinel, excluded from the loss by the row mask.
//
// max_depth > 0 truncates the chain: max_depth=1 keeps only the direct parent,
// whose singleton softmax weight is exactly 1 for any tau.
template <typename S>
Tensor<S> prior_matrix(const std::vector<int>& heads, double tau, int max_depth = 0,
                       int pad_to = 0) {
  if (tau <= 0.0) throw ConfigError("prior temperature must be positive");
  int t = static_cast<int>(heads.size());
  int p = t + 1;
  if (pad_to > p) p = pad_to;
  Tensor<S> prior(p, p);
  for (int i = 1; i <= t; ++i) {
    auto chain = ancestors(heads, i);
    if (max_depth > 0 && static_cast<int>(chain.size()) > max_depth) chain.resize(max_depth);
    if (chain.empty()) {
      prior.at(i, 0) = S(1);  // root token attends to the artificial root
      continue;
    }
    double mx = -static_cast<double>(chain[0].second) / tau;  // nearest ancestor
    double sum = 0.0;
    std::vector<double> w(chain.size());
    for (size_t k = 0; k < chain.size(); ++k) {
      w[k] = std::exp(-static_cast<double>(chain[k].second) / tau - mx);
      sum += w[k];
    }
    for (size_t k = 0; k < chain.size(); ++k)
      prior.at(i, chain[k].first) = static_cast<S>(w[k] / sum);
  }
  return prior;
}

// Loss row mask matching prior_matrix layout: real tokens in, SOS and PAD out.
inline std::vector<uint8_t> prior_row_mask(int num_tokens, int pad_to = 0) {
  int p = num_tokens + 1;
  if (pad_to > p) p = pad_to;
  std::vector<uint8_t> mask(p, 0);
  for (int i = 1; i <= num_tokens; ++i) mask[i] = 1;
  return mask;
}

}  // namespace synformer
