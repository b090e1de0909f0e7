#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synformer/corpus.hpp"
#include "synformer/model.hpp"

namespace synformer {

// Writes one JSON object per utterance: tokens (with the start marker), then
// layer -> head -> row-major attention matrix, each (T+1) x (T+1). The
// supervised head is flagged so plots can highlight it.
template <typename S>
void dump_attention_line(std::ostream& os, const Model<S>& model, const Batch& batch, int b,
                         const Vocab& vocab) {
  Graph<S> g;  // inference mode: dropout off
  auto enc = model.encode(g, batch, b);
  int p = batch.length[b] + 1;  // trim to this utterance's own width

  nlohmann::json obj;
  obj["tokens"] = nlohmann::json::array();
  obj["tokens"].push_back("[SOS]");
  for (int t = 0; t < batch.length[b]; ++t)
    obj["tokens"].push_back(vocab.decode(batch.token_id(b, 1 + t)));

  obj["layers"] = nlohmann::json::array();
  for (size_t l = 0; l < enc.attn.size(); ++l) {
    nlohmann::json layer;
    layer["layer"] = l + 1;
    layer["heads"] = nlohmann::json::array();
    for (size_t h = 0; h < enc.attn[l].size(); ++h) {
      nlohmann::json head;
      head["head"] = h;
      bool supervised = model.dims.use_dep &&
                        static_cast<int>(l + 1) == model.dims.syntactic && h == 0;
      head["syntactic"] = supervised;
      nlohmann::json rows = nlohmann::json::array();
      const auto& w = enc.attn[l][h].value();
      for (int i = 0; i < p; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < p; ++j) row.push_back(static_cast<double>(w.at(i, j)));
        rows.push_back(std::move(row));
      }
      head["weights"] = std::move(rows);
      layer["heads"].push_back(std::move(head));
    }
    obj["layers"].push_back(std::move(layer));
  }
  os << obj.dump() << "\n";
}

}  // namespace synformer
