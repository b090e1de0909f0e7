#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "synformer/common.hpp"
#include "synformer/tensor.hpp"

namespace synformer {

// One annotated utterance. pos/heads are optional sidecar annotations; empty
// vectors mean "absent". heads are 1-indexed with 0 = artificial root.
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slots;
  std::string intent;
  std::vector<std::string> pos;
  std::vector<int> heads;

  int length() const { return static_cast<int>(tokens.size()); }
  bool has_pos() const { return !pos.empty(); }
  bool has_heads() const { return !heads.empty(); }
};

inline bool is_valid_slot_tag(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return true;
  return false;
}

// Tree check: exactly one root and every token reaches it without cycling.
inline void validate_heads(const std::vector<int>& heads, const std::string& where) {
  int t = static_cast<int>(heads.size());
  int roots = 0;
  for (int h : heads) {
    if (h < 0 || h > t) throw DataError(where + ": head index out of [0, T]");
    if (h == 0) ++roots;
  }
  if (roots != 1) throw DataError(where + ": tree must have exactly one root token");
  for (int i = 1; i <= t; ++i) {
    int cur = i, steps = 0;
    while (cur != 0) {
      cur = heads[cur - 1];
      if (++steps > t) throw DataError(where + ": head links form a cycle");
    }
  }
}

inline void validate_utterance(const Utterance& u, const std::string& where) {
  if (u.tokens.empty()) throw DataError(where + ": empty utterance");
  if (u.slots.size() != u.tokens.size())
    throw DataError(where + ": slot count differs from token count");
  for (const auto& tag : u.slots)
    if (!is_valid_slot_tag(tag)) throw DataError(where + ": malformed slot tag '" + tag + "'");
  if (u.intent.empty()) throw DataError(where + ": empty intent");
  if (u.has_pos() && u.pos.size() != u.tokens.size())
    throw DataError(where + ": pos count differs from token count");
  if (u.has_heads()) {
    if (u.heads.size() != u.tokens.size())
      throw DataError(where + ": head count differs from token count");
    validate_heads(u.heads, where);
  }
}

// Reads the split-file convention: seq.in / seq.out / label, plus optional
// pos / heads sidecars, all line-aligned.
inline std::vector<Utterance> load_split(const std::string& dir) {
  auto path = [&](const char* name) { return dir + "/" + name; };
  auto seq_in = read_lines(path("seq.in"));
  auto seq_out = read_lines(path("seq.out"));
  auto labels = read_lines(path("label"));
  // tolerate one trailing blank line from editors
  auto drop_trailing_blank = [](std::vector<std::string>& v) {
    while (!v.empty() && trim(v.back()).empty()) v.pop_back();
  };
  drop_trailing_blank(seq_in);
  drop_trailing_blank(seq_out);
  drop_trailing_blank(labels);
  if (seq_in.size() != seq_out.size() || seq_in.size() != labels.size())
    throw DataError(dir + ": seq.in / seq.out / label line counts differ");

  bool have_pos = file_exists(path("pos"));
  bool have_heads = file_exists(path("heads"));
  std::vector<std::string> pos_lines, head_lines;
  if (have_pos) {
    pos_lines = read_lines(path("pos"));
    drop_trailing_blank(pos_lines);
    if (pos_lines.size() != seq_in.size())
      throw DataError(dir + ": pos sidecar line count differs");
  }
  if (have_heads) {
    head_lines = read_lines(path("heads"));
    drop_trailing_blank(head_lines);
    if (head_lines.size() != seq_in.size())
      throw DataError(dir + ": heads sidecar line count differs");
  }

  std::vector<Utterance> out;
  out.reserve(seq_in.size());
  for (size_t i = 0; i < seq_in.size(); ++i) {
    std::string where = dir + " line " + std::to_string(i + 1);
    Utterance u;
    u.tokens = split_ws(seq_in[i]);
    u.slots = split_ws(seq_out[i]);
    u.intent = trim(labels[i]);
    if (have_pos) u.pos = split_ws(pos_lines[i]);
    if (have_heads) {
      for (const auto& tok : split_ws(head_lines[i])) {
        try {
          size_t used = 0;
          int h = std::stoi(tok, &used);
          if (used != tok.size()) throw std::invalid_argument(tok);
          u.heads.push_back(h);
        } catch (const std::exception&) {
          throw DataError(where + ": non-integer head '" + tok + "'");
        }
      }
    }
    validate_utterance(u, where);
    out.push_back(std::move(u));
  }
  return out;
}

// Token vocabulary with fixed reserved slots. Non-reserved ids follow sorted
// token order so construction is deterministic across runs.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;

  std::vector<std::string> id_to_token;
  std::map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }

  int encode(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  const std::string& decode(int id) const { return id_to_token[id]; }

  void rebuild_index() {
    token_to_id.clear();
    for (size_t i = 0; i < id_to_token.size(); ++i) token_to_id[id_to_token[i]] = static_cast<int>(i);
  }

  static Vocab from_tokens(const std::vector<std::string>& sorted_tokens) {
    Vocab v;
    v.id_to_token = {"<pad>", "<unk>", "[SOS]"};
    for (const auto& t : sorted_tokens) v.id_to_token.push_back(t);
    v.rebuild_index();
    return v;
  }
};

inline Vocab build_vocab(const std::vector<Utterance>& train, int min_count = 1) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (train.empty()) throw DataError("build_vocab: empty training set");
  std::map<std::string, int> counts;
  for (const auto& u : train)
    for (const auto& t : u.tokens) ++counts[t];
  std::vector<std::string> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_count) kept.push_back(tok);  // map iteration is already sorted
  return Vocab::from_tokens(kept);
}

// Slot / intent / POS label inventories with deterministic id assignment.
// "O" is pinned to slot id 0; everything else is sorted. Pinning O gives the
// decoder's lowest-id tie-break a natural "no slot" winner.
struct LabelSpaces {
  std::vector<std::string> slot_labels;
  std::vector<std::string> intent_labels;
  std::vector<std::string> pos_labels;
  std::map<std::string, int> slot_to_id, intent_to_id, pos_to_id;

  int num_slots() const { return static_cast<int>(slot_labels.size()); }
  int num_intents() const { return static_cast<int>(intent_labels.size()); }
  int num_pos() const { return static_cast<int>(pos_labels.size()); }

  int slot_id(const std::string& s) const {
    auto it = slot_to_id.find(s);
    return it == slot_to_id.end() ? -1 : it->second;
  }
  int intent_id(const std::string& s) const {
    auto it = intent_to_id.find(s);
    return it == intent_to_id.end() ? -1 : it->second;
  }
  int pos_id(const std::string& s) const {
    auto it = pos_to_id.find(s);
    return it == pos_to_id.end() ? -1 : it->second;
  }

  void rebuild_index() {
    slot_to_id.clear();
    intent_to_id.clear();
    pos_to_id.clear();
    for (size_t i = 0; i < slot_labels.size(); ++i) slot_to_id[slot_labels[i]] = static_cast<int>(i);
    for (size_t i = 0; i < intent_labels.size(); ++i)
      intent_to_id[intent_labels[i]] = static_cast<int>(i);
    for (size_t i = 0; i < pos_labels.size(); ++i) pos_to_id[pos_labels[i]] = static_cast<int>(i);
  }
};

inline LabelSpaces build_label_spaces(const std::vector<Utterance>& train) {
  if (train.empty()) throw DataError("build_label_spaces: empty training set");
  std::set<std::string> slots{"O"}, intents, pos;
  for (const auto& u : train) {
    for (const auto& s : u.slots) slots.insert(s);
    intents.insert(u.intent);  // composite '#'-joined intents stay one class
    for (const auto& p : u.pos) pos.insert(p);
  }
  for (const auto& s : slots)
    if (s.size() >= 3 && s[0] == 'I' && !slots.count("B" + s.substr(1)))
      warn("label space: " + s + " has no matching B- tag");
  LabelSpaces ls;
  ls.slot_labels.push_back("O");
  for (const auto& s : slots)
    if (s != "O") ls.slot_labels.push_back(s);
  ls.intent_labels.assign(intents.begin(), intents.end());
  ls.pos_labels.assign(pos.begin(), pos.end());
  ls.rebuild_index();
  return ls;
}

// Pretrained word vectors in the common text format. Vocab words missing from
// the file get seeded uniform(-0.1, 0.1) rows; PAD stays the zero vector.
// Pass an empty path to initialize every row that way (toy corpora).
inline Tensor<float> load_word_vectors(const std::string& path, const Vocab& vocab, int dim,
                                       uint64_t seed) {
  Tensor<float> table(vocab.size(), dim);
  std::vector<uint8_t> found(vocab.size(), 0);
  if (!path.empty()) {
    auto lines = read_lines(path);
    for (size_t ln = 0; ln < lines.size(); ++ln) {
      if (trim(lines[ln]).empty()) continue;
      auto fields = split_ws(lines[ln]);
      if (static_cast<int>(fields.size()) != dim + 1)
        throw DataError(path + " line " + std::to_string(ln + 1) + ": expected word + " +
                        std::to_string(dim) + " values, got " +
                        std::to_string(fields.size() - 1));
      auto it = vocab.token_to_id.find(fields[0]);
      if (it == vocab.token_to_id.end()) continue;
      for (int j = 0; j < dim; ++j) {
        try {
          table.at(it->second, j) = std::stof(fields[j + 1]);
        } catch (const std::exception&) {
          throw DataError(path + " line " + std::to_string(ln + 1) + ": bad number");
        }
      }
      found[it->second] = 1;
    }
  }
  Rng rng(seed);
  for (int i = 0; i < vocab.size(); ++i) {
    if (found[i] || i == Vocab::kPad) continue;  // PAD embedding stays zero
    for (int j = 0; j < dim; ++j) table.at(i, j) = static_cast<float>(uniform_in(rng, -0.1, 0.1));
  }
  return table;
}

// Padded batch. token_ids covers SOS + tokens (B x (T_max+1)); per-token label
// tensors cover real tokens only (B x T_max) with -1 marking ignored positions.
struct Batch {
  int batch = 0;
  int t_max = 0;                       // longest real-token count
  std::vector<int> token_ids;          // B x (t_max+1), SOS at column 0
  std::vector<int> char_ids;           // B x t_max x c_max, 0 = char PAD
  std::vector<int> char_len;           // B x t_max
  int c_max = 0;
  Tensor<uint8_t> mask;                // B x (t_max+1); 1 on SOS + real tokens
  std::vector<int> length;             // B
  std::vector<int> slot_ids;           // B x t_max, -1 ignored
  std::vector<int> intent_ids;         // B, -1 ignored
  std::vector<int> pos_ids;            // B x t_max, -1 ignored
  std::vector<std::vector<int>> heads; // per-utterance, empty when absent
  bool has_pos = false;
  bool has_heads = false;

  int positions() const { return t_max + 1; }
  int token_id(int b, int p) const { return token_ids[static_cast<size_t>(b) * positions() + p]; }
  int char_id(int b, int t, int c) const {
    return char_ids[(static_cast<size_t>(b) * t_max + t) * c_max + c];
  }
};

// Byte-level character ids: raw byte value + 1, with 0 reserved for padding.
constexpr int kCharVocabSize = 257;

inline Batch encode_batch(const std::vector<Utterance>& utts, const Vocab& vocab,
                          const LabelSpaces& spaces) {
  if (utts.empty()) throw DataError("encode_batch: empty batch");
  Batch b;
  b.batch = static_cast<int>(utts.size());
  b.has_pos = true;
  b.has_heads = true;
  for (const auto& u : utts) {
    if (u.tokens.empty()) throw DataError("encode_batch: zero-length utterance");
    b.t_max = std::max(b.t_max, u.length());
    for (const auto& t : u.tokens) b.c_max = std::max(b.c_max, static_cast<int>(t.size()));
    b.has_pos = b.has_pos && u.has_pos();
    b.has_heads = b.has_heads && u.has_heads();
  }
  int p = b.t_max + 1;
  b.token_ids.assign(static_cast<size_t>(b.batch) * p, Vocab::kPad);
  b.char_ids.assign(static_cast<size_t>(b.batch) * b.t_max * b.c_max, 0);
  b.char_len.assign(static_cast<size_t>(b.batch) * b.t_max, 0);
  b.mask = Tensor<uint8_t>(b.batch, p);
  b.slot_ids.assign(static_cast<size_t>(b.batch) * b.t_max, -1);
  b.pos_ids.assign(static_cast<size_t>(b.batch) * b.t_max, -1);
  b.intent_ids.assign(b.batch, -1);

  for (int i = 0; i < b.batch; ++i) {
    const Utterance& u = utts[i];
    int t = u.length();
    b.length.push_back(t);
    b.token_ids[static_cast<size_t>(i) * p] = Vocab::kSos;
    b.mask.at(i, 0) = 1;
    for (int j = 0; j < t; ++j) {
      b.token_ids[static_cast<size_t>(i) * p + 1 + j] = vocab.encode(u.tokens[j]);
      b.mask.at(i, 1 + j) = 1;
      const std::string& tok = u.tokens[j];
      b.char_len[static_cast<size_t>(i) * b.t_max + j] = static_cast<int>(tok.size());
      for (size_t c = 0; c < tok.size(); ++c)
        b.char_ids[(static_cast<size_t>(i) * b.t_max + j) * b.c_max + c] =
            static_cast<int>(static_cast<unsigned char>(tok[c])) + 1;
      if (!u.slots.empty())  // raw inference input carries tokens only
        b.slot_ids[static_cast<size_t>(i) * b.t_max + j] = spaces.slot_id(u.slots[j]);
      if (u.has_pos()) b.pos_ids[static_cast<size_t>(i) * b.t_max + j] = spaces.pos_id(u.pos[j]);
    }
    b.intent_ids[i] = spaces.intent_id(u.intent);
    b.heads.push_back(u.heads);
  }
  return b;
}

}  // namespace synformer
