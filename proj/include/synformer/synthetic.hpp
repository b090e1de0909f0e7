#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "synformer/common.hpp"
#include "synformer/corpus.hpp"

namespace synformer {

// Grammar templates for a tiny flight-domain corpus with gold trees, POS tags,
// BIO slots, and intents. Placeholders (<CITY> etc.) expand to single- or
// multi-token fillers; head indices are remapped on expansion so every output
// utterance still carries a valid dependency tree. The corpus deliberately
// bakes in two hard patterns: "may" as both a month name and a modal verb, and
// "to"-phrases whose slot depends on the surrounding intent.
namespace toy {

struct Item {
  std::string token;  // literal token, or placeholder key when filler=true
  std::string pos;
  std::string slot;   // slot type for fillers ("toloc"), literal tag otherwise
  int head = 0;       // 1-based template position; 0 = root
  bool filler = false;
};

struct Template {
  std::string intent;
  std::vector<Item> items;
};

inline const std::vector<std::vector<std::string>>& fillers(const std::string& key) {
  static const std::vector<std::vector<std::string>> cities{
      {"denver"}, {"boston"}, {"new", "york"}, {"los", "angeles"}};
  static const std::vector<std::vector<std::string>> months{{"may"}, {"june"}, {"march"}};
  static const std::vector<std::vector<std::string>> ordinals{{"first"}, {"second"}, {"third"}};
  if (key == "CITY") return cities;
  if (key == "MONTH") return months;
  if (key == "ORD") return ordinals;
  throw ConfigError("toy template references unknown placeholder <" + key + ">");
}

inline std::vector<Template> templates() {
  auto lit = [](std::string tok, std::string pos, std::string tag, int head) {
    return Item{std::move(tok), std::move(pos), std::move(tag), head, false};
  };
  auto ph = [](std::string key, std::string slot_type, int head) {
    return Item{std::move(key), "NP", std::move(slot_type), head, true};
  };
  std::vector<Template> out;
  // month reading of "may"
  out.push_back({"BookFlight",
                 {lit("book", "VB", "O", 0), lit("a", "DT", "O", 3),
                  lit("flight", "NN", "O", 1), lit("on", "IN", "O", 3),
                  ph("MONTH", "month", 4), ph("ORD", "ord", 5)}});
  // modal reading of "may"
  out.push_back({"BookFlight",
                 {lit("may", "MD", "O", 3), lit("i", "PRP", "O", 3),
                  lit("book", "VB", "O", 0), lit("a", "DT", "O", 5),
                  lit("flight", "NN", "O", 3), lit("to", "TO", "O", 5),
                  ph("CITY", "toloc", 6)}});
  // bare from/to pattern
  out.push_back({"FindFlight",
                 {lit("flights", "NNS", "O", 0), lit("from", "IN", "O", 1),
                  ph("CITY", "fromloc", 2), lit("to", "TO", "O", 1),
                  ph("CITY", "toloc", 4)}});
  // composite intent over the same to-phrase surface
  out.push_back({"FindFlight#Airfare",
                 {lit("show", "VB", "O", 0), lit("me", "PRP", "O", 1),
                  lit("fares", "NNS", "O", 1), lit("from", "IN", "O", 3),
                  ph("CITY", "fromloc", 4), lit("to", "TO", "O", 3),
                  ph("CITY", "toloc", 6)}});
  // participial attachment plus a month/ordinal date
  out.push_back({"FindFlight",
                 {lit("list", "VB", "O", 2), lit("flights", "NNS", "O", 0),
                  lit("arriving", "VBG", "O", 2), lit("in", "IN", "O", 5),
                  ph("CITY", "city", 3), lit("on", "IN", "O", 7),
                  ph("MONTH", "month", 3), ph("ORD", "ord", 7)}});
  return out;
}

// Expands one template with rng-chosen fillers into a full utterance,
// remapping heads: a span's last token carries the template head (itself
// remapped to the target span's last token), earlier span tokens chain to
// their right neighbor.
inline Utterance expand(const Template& tpl, Rng& rng) {
  int n = static_cast<int>(tpl.items.size());
  std::vector<std::vector<std::string>> spans(n);
  for (int i = 0; i < n; ++i) {
    const Item& it = tpl.items[i];
    if (it.filler) {
      const auto& options = fillers(it.token);
      spans[i] = options[uniform_int(rng, static_cast<int>(options.size()))];
    } else {
      spans[i] = {it.token};
    }
  }
  std::vector<int> span_end(n);  // 1-based position of each span's last token
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    pos += static_cast<int>(spans[i].size());
    span_end[i] = pos;
  }

  Utterance u;
  u.intent = tpl.intent;
  for (int i = 0; i < n; ++i) {
    const Item& it = tpl.items[i];
    int head_of_span = it.head == 0 ? 0 : span_end[it.head - 1];
    for (size_t k = 0; k < spans[i].size(); ++k) {
      u.tokens.push_back(spans[i][k]);
      u.pos.push_back(it.pos);
      if (it.filler)
        u.slots.push_back((k == 0 ? "B-" : "I-") + it.slot);
      else
        u.slots.push_back(it.slot);
      bool last = k + 1 == spans[i].size();
      u.heads.push_back(last ? head_of_span
                             : static_cast<int>(u.heads.size()) + 2);  // chain rightward
    }
  }
  validate_utterance(u, "toy generator");
  return u;
}

}  // namespace toy

// Deterministic toy dataset: cycles through the templates so every pattern
// (including the composite intent) appears, with rng-chosen fillers.
inline std::vector<Utterance> generate_toy(int count, uint64_t seed) {
  if (count < 1) throw ConfigError("toy generator: count must be >= 1");
  auto tpls = toy::templates();
  Rng rng(seed);
  std::vector<Utterance> out;
  for (int i = 0; i < count; ++i)
    out.push_back(toy::expand(tpls[static_cast<size_t>(i) % tpls.size()], rng));
  return out;
}

// Writes a generated split in the standard directory layout.
inline void write_split(const std::string& dir, const std::vector<Utterance>& utts) {
  std::filesystem::create_directories(dir);
  std::ofstream in(dir + "/seq.in"), outf(dir + "/seq.out"), lab(dir + "/label"),
      posf(dir + "/pos"), heads(dir + "/heads");
  if (!in || !outf || !lab || !posf || !heads)
    throw DataError("toy generator: cannot write into '" + dir + "'");
  for (const auto& u : utts) {
    for (size_t i = 0; i < u.tokens.size(); ++i) in << (i ? " " : "") << u.tokens[i];
    in << "\n";
    for (size_t i = 0; i < u.slots.size(); ++i) outf << (i ? " " : "") << u.slots[i];
    outf << "\n";
    lab << u.intent << "\n";
    for (size_t i = 0; i < u.pos.size(); ++i) posf << (i ? " " : "") << u.pos[i];
    posf << "\n";
    for (size_t i = 0; i < u.heads.size(); ++i) heads << (i ? " " : "") << u.heads[i];
    heads << "\n";
  }
}

// Standard toy dataset tree: train/valid/test with disjoint rng streams.
inline void write_toy_corpus(const std::string& root, int train_count, int valid_count,
                             int test_count, uint64_t seed) {
  write_split(root + "/train", generate_toy(train_count, seed));
  write_split(root + "/valid", generate_toy(valid_count, seed + 1));
  write_split(root + "/test", generate_toy(test_count, seed + 2));
}

}  // namespace synformer
