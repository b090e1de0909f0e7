#pragma once

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "synformer/common.hpp"
#include "synformer/viterbi.hpp"

namespace synformer {

// A maximal B-x (I-x)* run. Tolerant extraction also opens a chunk on an I-x
// with no live chunk of type x before it, matching the usual chunk-evaluation
// convention for malformed sequences.
struct Chunk {
  std::string type;
  int start = 0;
  int end = 0;  // inclusive

  bool operator==(const Chunk& o) const {
    return type == o.type && start == o.start && end == o.end;
  }
  bool operator<(const Chunk& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return type < o.type;
  }
};

inline std::vector<Chunk> extract_chunks(const std::vector<std::string>& tags) {
  std::vector<Chunk> chunks;
  bool open = false;
  Chunk cur;
  auto close = [&]() {
    if (open) chunks.push_back(cur);
    open = false;
  };
  for (size_t i = 0; i < tags.size(); ++i) {
    const std::string& t = tags[i];
    if (bio::is_b(t)) {
      close();
      cur = {bio::type_of(t), static_cast<int>(i), static_cast<int>(i)};
      open = true;
    } else if (bio::is_i(t)) {
      if (open && cur.type == bio::type_of(t)) {
        cur.end = static_cast<int>(i);
      } else {
        close();
        cur = {bio::type_of(t), static_cast<int>(i), static_cast<int>(i)};
        open = true;
      }
    } else {
      close();
    }
  }
  close();
  return chunks;
}

struct SlotScore {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  size_t tp = 0, fp = 0, fn = 0;
};

// Micro-averaged chunk F1 over a corpus: a predicted chunk counts as a true
// positive only on an exact (type, start, end) match.
inline SlotScore slot_f1(const std::vector<std::vector<std::string>>& preds,
                         const std::vector<std::vector<std::string>>& golds) {
  if (preds.size() != golds.size()) throw DataError("slot_f1: corpus size mismatch");
  SlotScore s;
  for (size_t u = 0; u < preds.size(); ++u) {
    auto p = extract_chunks(preds[u]);
    auto g = extract_chunks(golds[u]);
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<Chunk> both;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));
    s.tp += both.size();
    s.fp += p.size() - both.size();
    s.fn += g.size() - both.size();
  }
  s.precision = (s.tp + s.fp) ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
  s.recall = (s.tp + s.fn) ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
  s.f1 = (s.precision + s.recall > 0.0)
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

inline std::set<std::string> atomic_intents(const std::string& composite) {
  std::set<std::string> out;
  for (const auto& part : split_on(composite, '#')) out.insert(part);
  return out;
}

// Single-label protocol: the prediction matches any one gold atomic label.
inline bool intent_correct_single(const std::string& pred, const std::string& gold) {
  auto p = atomic_intents(pred), g = atomic_intents(gold);
  for (const auto& x : p)
    if (g.count(x)) return true;
  return false;
}

// Multi-label protocol: the full composite string matches exactly.
inline bool intent_correct_multi(const std::string& pred, const std::string& gold) {
  return pred == gold;
}

struct EvalReport {
  SlotScore slots;
  double id_s = 0.0;
  double id_m = 0.0;
  size_t id_s_correct = 0, id_m_correct = 0, total = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "slot_precision=" << slots.precision << "\n"
       << "slot_recall=" << slots.recall << "\n"
       << "slot_f1=" << slots.f1 << "\n"
       << "slot_tp=" << slots.tp << " slot_fp=" << slots.fp << " slot_fn=" << slots.fn << "\n"
       << "intent_acc_single=" << id_s << "\n"
       << "intent_acc_multi=" << id_m << "\n"
       << "intent_correct_single=" << id_s_correct << "/" << total << "\n"
       << "intent_correct_multi=" << id_m_correct << "/" << total << "\n";
    return os.str();
  }
};

inline EvalReport evaluate_corpus(const std::vector<std::vector<std::string>>& slot_preds,
                                  const std::vector<std::vector<std::string>>& slot_golds,
                                  const std::vector<std::string>& intent_preds,
                                  const std::vector<std::string>& intent_golds) {
  if (intent_preds.size() != intent_golds.size())
    throw DataError("evaluate_corpus: intent corpus size mismatch");
  EvalReport r;
  r.slots = slot_f1(slot_preds, slot_golds);
  r.total = intent_golds.size();
  for (size_t i = 0; i < intent_golds.size(); ++i) {
    bool m = intent_correct_multi(intent_preds[i], intent_golds[i]);
    bool s = intent_correct_single(intent_preds[i], intent_golds[i]);
    // exact composite match implies a nonempty atomic intersection
    r.id_m_correct += m ? 1 : 0;
    r.id_s_correct += s ? 1 : 0;
  }
  r.id_s = r.total ? static_cast<double>(r.id_s_correct) / r.total : 0.0;
  r.id_m = r.total ? static_cast<double>(r.id_m_correct) / r.total : 0.0;
  return r;
}

}  // namespace synformer
