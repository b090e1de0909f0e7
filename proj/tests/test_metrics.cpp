#include <catch2/catch_amalgamated.hpp>
#include <map>
#include <string>
#include <vector>

#include "synformer/metrics.hpp"

using namespace synformer;

namespace {

// Independent brute-force chunker used as the oracle: scan for maximal runs,
// treating any I-x that cannot continue the previous tag as a chunk opener.
std::vector<std::vector<int>> oracle_chunks(const std::vector<std::string>& tags) {
  std::vector<std::vector<int>> out;  // {type-hash, start, end}
  size_t i = 0;
  auto hash = [](const std::string& s) {
    int h = 0;
    for (char c : s) h = h * 131 + c;
    return h;
  };
  while (i < tags.size()) {
    if (tags[i] == "O") {
      ++i;
      continue;
    }
    std::string type = tags[i].substr(2);
    size_t j = i + 1;
    while (j < tags.size() && tags[j] == "I-" + type) ++j;
    out.push_back({hash(type), static_cast<int>(i), static_cast<int>(j - 1)});
    i = j;
  }
  return out;
}

struct OracleCounts {
  size_t tp = 0, fp = 0, fn = 0;
};

OracleCounts oracle_score(const std::vector<std::vector<std::string>>& preds,
                          const std::vector<std::vector<std::string>>& golds) {
  OracleCounts c;
  for (size_t u = 0; u < preds.size(); ++u) {
    auto p = oracle_chunks(preds[u]);
    auto g = oracle_chunks(golds[u]);
    std::map<std::vector<int>, int> bag;
    for (const auto& ch : g) bag[ch]++;
    size_t tp = 0;
    for (const auto& ch : p) {
      auto it = bag.find(ch);
      if (it != bag.end() && it->second > 0) {
        --it->second;
        ++tp;
      }
    }
    c.tp += tp;
    c.fp += p.size() - tp;
    c.fn += g.size() - tp;
  }
  return c;
}

std::vector<std::string> random_tags(Rng& rng, int len) {
  static const std::vector<std::string> pool{"O",   "B-a", "I-a", "B-b",
                                             "I-b", "B-c", "I-c"};
  std::vector<std::string> tags(len);
  for (auto& t : tags) t = pool[uniform_int(rng, static_cast<int>(pool.size()))];
  return tags;
}

std::string random_composite(Rng& rng) {
  static const std::vector<std::string> atoms{"a", "b", "c"};
  int n = 1 + uniform_int(rng, 3);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += "#";
    out += atoms[uniform_int(rng, static_cast<int>(atoms.size()))];
  }
  return out;
}

}  // namespace

TEST_CASE("chunk extraction handles clean and malformed runs") {
  auto c = extract_chunks({"O", "B-city", "I-city", "O", "B-day"});
  REQUIRE(c.size() == 2);
  REQUIRE(c[0] == Chunk{"city", 1, 2});
  REQUIRE(c[1] == Chunk{"day", 4, 4});

  // lone I-x opens a chunk; type switches close and reopen
  c = extract_chunks({"I-a", "I-a", "I-b", "B-b", "I-a"});
  REQUIRE(c.size() == 4);
  REQUIRE(c[0] == Chunk{"a", 0, 1});
  REQUIRE(c[1] == Chunk{"b", 2, 2});
  REQUIRE(c[2] == Chunk{"b", 3, 3});
  REQUIRE(c[3] == Chunk{"a", 4, 4});

  REQUIRE(extract_chunks({"O", "O"}).empty());
  REQUIRE(extract_chunks({}).empty());
}

TEST_CASE("micro F1 on a worked example") {
  std::vector<std::vector<std::string>> gold{
      {"B-a", "I-a", "O", "B-b"},
      {"O", "B-c"},
  };
  std::vector<std::vector<std::string>> pred{
      {"B-a", "I-a", "O", "O"},   // one exact match, one miss
      {"B-c", "B-c"},             // wrong position + exact match
  };
  auto s = slot_f1(pred, gold);
  REQUIRE(s.tp == 2);
  REQUIRE(s.fp == 1);
  REQUIRE(s.fn == 1);
  REQUIRE(s.precision == Catch::Approx(2.0 / 3));
  REQUIRE(s.recall == Catch::Approx(2.0 / 3));
  REQUIRE(s.f1 == Catch::Approx(2.0 / 3));
}

TEST_CASE("boundary and type errors are not credited") {
  auto s = slot_f1({{"B-a", "I-a", "I-a"}}, {{"B-a", "I-a", "O"}});
  REQUIRE(s.tp == 0);  // span too long
  s = slot_f1({{"B-b", "I-b"}}, {{"B-a", "I-a"}});
  REQUIRE(s.tp == 0);  // wrong type
  s = slot_f1({{"B-a", "B-a"}}, {{"B-a", "I-a"}});
  REQUIRE(s.tp == 0);  // split into two short chunks
}

TEST_CASE("empty predictions give zero scores without dividing by zero") {
  auto s = slot_f1({{"O", "O"}}, {{"B-a", "O"}});
  REQUIRE(s.tp == 0);
  REQUIRE(s.precision == 0.0);
  REQUIRE(s.recall == 0.0);
  REQUIRE(s.f1 == 0.0);
  REQUIRE_THROWS_AS(slot_f1({{"O"}}, {}), DataError);
}

TEST_CASE("scores match the brute-force oracle on random corpora") {
  Rng rng(90210);
  for (int corpus = 0; corpus < 1000; ++corpus) {
    int n = 1 + uniform_int(rng, 8);
    std::vector<std::vector<std::string>> gold(n), pred(n);
    for (int u = 0; u < n; ++u) {
      int len = 1 + uniform_int(rng, 10);
      gold[u] = random_tags(rng, len);
      pred[u] = random_tags(rng, len);
    }
    auto s = slot_f1(pred, gold);
    auto o = oracle_score(pred, gold);
    REQUIRE(s.tp == o.tp);
    REQUIRE(s.fp == o.fp);
    REQUIRE(s.fn == o.fn);
    double prec = (o.tp + o.fp) ? double(o.tp) / (o.tp + o.fp) : 0.0;
    double rec = (o.tp + o.fn) ? double(o.tp) / (o.tp + o.fn) : 0.0;
    double f1 = (prec + rec > 0) ? 2 * prec * rec / (prec + rec) : 0.0;
    REQUIRE(s.f1 == Catch::Approx(f1).margin(1e-12));
  }
}

TEST_CASE("intent protocols: any-atom match vs exact composite match") {
  REQUIRE(intent_correct_single("flight", "flight"));
  REQUIRE(intent_correct_single("flight", "flight#airfare"));
  REQUIRE(intent_correct_single("airfare#meal", "flight#airfare"));
  REQUIRE_FALSE(intent_correct_single("meal", "flight#airfare"));

  REQUIRE(intent_correct_multi("flight#airfare", "flight#airfare"));
  REQUIRE_FALSE(intent_correct_multi("flight", "flight#airfare"));
  REQUIRE_FALSE(intent_correct_multi("airfare#flight", "flight#airfare"));
}

TEST_CASE("exact composite match always implies an atom match") {
  Rng rng(17);
  int multi_hits = 0;
  for (int it = 0; it < 5000; ++it) {
    auto pred = random_composite(rng);
    auto gold = random_composite(rng);
    if (intent_correct_multi(pred, gold)) {
      ++multi_hits;
      REQUIRE(intent_correct_single(pred, gold));
    }
  }
  REQUIRE(multi_hits > 0);  // the property was actually exercised
}

TEST_CASE("corpus evaluation aggregates both protocols") {
  std::vector<std::vector<std::string>> gold{{"B-a"}, {"O"}, {"B-b", "I-b"}};
  std::vector<std::vector<std::string>> pred{{"B-a"}, {"O"}, {"B-b", "O"}};
  std::vector<std::string> ig{"x", "y#z", "w"};
  std::vector<std::string> ip{"x", "y", "q"};
  auto r = evaluate_corpus(pred, gold, ip, ig);
  REQUIRE(r.total == 3);
  REQUIRE(r.id_m_correct == 1);   // only "x"
  REQUIRE(r.id_s_correct == 2);   // "x" and "y" in "y#z"
  REQUIRE(r.id_m == Catch::Approx(1.0 / 3));
  REQUIRE(r.id_s == Catch::Approx(2.0 / 3));
  REQUIRE(r.slots.tp == 1);  // the (b,0,1) gold chunk is cut short in pred
  REQUIRE(r.to_text().find("slot_f1=") != std::string::npos);
}
