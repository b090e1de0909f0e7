#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "synformer/common.hpp"
#include "synformer/tensor.hpp"

namespace synformer {

// Hand-set 0/1 BIO transition constraints. In log space a 0 becomes -inf, so
// invalid paths can never win regardless of emissions.
struct TransitionMatrix {
  int num_labels = 0;
  std::vector<uint8_t> allowed;        // num_labels x num_labels, [prev][next]
  std::vector<uint8_t> start_allowed;  // per label

  bool ok(int prev, int next) const {
    return allowed[static_cast<size_t>(prev) * num_labels + next] != 0;
  }
};

namespace bio {
inline bool is_b(const std::string& t) { return t.size() >= 3 && t[0] == 'B' && t[1] == '-'; }
inline bool is_i(const std::string& t) { return t.size() >= 3 && t[0] == 'I' && t[1] == '-'; }
inline std::string type_of(const std::string& t) { return t.substr(2); }
}  // namespace bio

inline TransitionMatrix build_transitions(const std::vector<std::string>& slot_labels) {
  TransitionMatrix tm;
  tm.num_labels = static_cast<int>(slot_labels.size());
  tm.allowed.assign(static_cast<size_t>(tm.num_labels) * tm.num_labels, 1);
  tm.start_allowed.assign(tm.num_labels, 1);
  for (int j = 0; j < tm.num_labels; ++j) {
    const std::string& next = slot_labels[j];
    if (next != "O" && !bio::is_b(next) && !bio::is_i(next))
      throw DataError("transitions: malformed slot label '" + next + "'");
    if (!bio::is_i(next)) continue;
    // I-x is reachable only from B-x or I-x
    tm.start_allowed[j] = 0;
    std::string x = bio::type_of(next);
    for (int i = 0; i < tm.num_labels; ++i) {
      const std::string& prev = slot_labels[i];
      bool continues = (bio::is_b(prev) || bio::is_i(prev)) && bio::type_of(prev) == x;
      if (!continues) tm.allowed[static_cast<size_t>(i) * tm.num_labels + j] = 0;
    }
  }
  return tm;
}

struct DecodedSlots {
  std::vector<int> labels;
  double log_score = 0.0;
};

// Max-sum decoding over emission log-probabilities (T x S). Ties break toward
// the lowest label id at every decision, so uniform emissions yield all-O when
// O holds id 0.
inline DecodedSlots viterbi(const Tensor<double>& emissions, const TransitionMatrix& tm) {
  int t_len = emissions.rows(), s = emissions.cols();
  if (t_len < 1) throw DataError("viterbi: empty sequence");
  if (s != tm.num_labels) throw DataError("viterbi: label count mismatch");
  if (!emissions.all_finite()) throw NumericError("viterbi: non-finite emission score");
  const double neg_inf = -std::numeric_limits<double>::infinity();

  std::vector<double> dp(static_cast<size_t>(t_len) * s, neg_inf);
  std::vector<int> back(static_cast<size_t>(t_len) * s, -1);
  for (int j = 0; j < s; ++j)
    if (tm.start_allowed[j]) dp[j] = emissions.at(0, j);
  for (int t = 1; t < t_len; ++t) {
    for (int j = 0; j < s; ++j) {
      double best = neg_inf;
      int arg = -1;
      for (int i = 0; i < s; ++i) {
        if (!tm.ok(i, j)) continue;
        double cand = dp[static_cast<size_t>(t - 1) * s + i];
        if (cand > best) {  // strict: first (lowest-id) maximizer wins
          best = cand;
          arg = i;
        }
      }
      if (arg < 0) continue;  // unreachable label at this step
      dp[static_cast<size_t>(t) * s + j] = best + emissions.at(t, j);
      back[static_cast<size_t>(t) * s + j] = arg;
    }
  }

  double best = neg_inf;
  int arg = -1;
  for (int j = 0; j < s; ++j) {
    double cand = dp[static_cast<size_t>(t_len - 1) * s + j];
    if (cand > best) {
      best = cand;
      arg = j;
    }
  }
  if (arg < 0) throw DataError("viterbi: no valid path");  // cannot happen with O present

  DecodedSlots out;
  out.log_score = best;
  out.labels.assign(t_len, 0);
  for (int t = t_len - 1; t >= 0; --t) {
    out.labels[t] = arg;
    if (t > 0) arg = back[static_cast<size_t>(t) * s + arg];
  }
  return out;
}

}  // namespace synformer
