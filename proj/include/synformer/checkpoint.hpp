#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "synformer/common.hpp"
#include "synformer/corpus.hpp"
#include "synformer/params.hpp"

namespace synformer {

// Versioned binary model container. Everything multi-byte is written
// little-endian explicitly, so files are portable across hosts. Parameter
// tensors are stored as 32-bit floats in registration order.
struct Checkpoint {
  std::string config_text;  // canonical resolved key=value dump
  std::vector<std::string> vocab_tokens;
  std::vector<std::string> slot_labels, intent_labels, pos_labels;
  std::string selection_metric;
  double best_value = 0.0;
  int64_t best_epoch = -1;
  std::vector<std::pair<std::string, Tensor<float>>> params;
};

namespace ckpt_io {

constexpr char kMagic[4] = {'S', 'Y', 'N', 'F'};
constexpr uint32_t kVersion = 1;

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_str_list(std::ostream& os, const std::vector<std::string>& v) {
  put_u64(os, v.size());
  for (const auto& s : v) put_str(os, s);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& is) {
  uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& is) {
  uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string get_str(std::istream& is) {
  uint64_t n = get_u64(is);
  if (n > (1ull << 32)) throw DataError("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("checkpoint: truncated file");
  return s;
}

inline std::vector<std::string> get_str_list(std::istream& is) {
  uint64_t n = get_u64(is);
  if (n > (1ull << 24)) throw DataError("checkpoint: implausible list length");
  std::vector<std::string> v;
  v.reserve(n);
  for (uint64_t i = 0; i < n; ++i) v.push_back(get_str(is));
  return v;
}

}  // namespace ckpt_io

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  using namespace ckpt_io;
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_str(os, c.config_text);
  put_str_list(os, c.vocab_tokens);
  put_str_list(os, c.slot_labels);
  put_str_list(os, c.intent_labels);
  put_str_list(os, c.pos_labels);
  put_str(os, c.selection_metric);
  put_f64(os, c.best_value);
  put_u64(os, static_cast<uint64_t>(c.best_epoch));
  put_u64(os, c.params.size());
  for (const auto& [name, t] : c.params) {
    put_str(os, name);
    put_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
    for (float v : t.data) put_f32(os, v);
  }
  os.flush();
  if (!os) throw DataError("checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
  using namespace ckpt_io;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("checkpoint: '" + path + "' is not a model container");
  uint32_t version = get_u32(is);
  if (version != kVersion)
    throw DataError("checkpoint: unsupported container version " + std::to_string(version));
  Checkpoint c;
  c.config_text = get_str(is);
  c.vocab_tokens = get_str_list(is);
  c.slot_labels = get_str_list(is);
  c.intent_labels = get_str_list(is);
  c.pos_labels = get_str_list(is);
  c.selection_metric = get_str(is);
  c.best_value = get_f64(is);
  c.best_epoch = static_cast<int64_t>(get_u64(is));
  uint64_t n = get_u64(is);
  if (n > (1ull << 24)) throw DataError("checkpoint: implausible parameter count");
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = get_str(is);
    uint32_t ndim = get_u32(is);
    if (ndim > 8) throw DataError("checkpoint: implausible tensor rank");
    Tensor<float> t;
    size_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(static_cast<int>(get_u32(is)));
      numel *= static_cast<size_t>(t.shape.back());
    }
    if (numel > (1ull << 30)) throw DataError("checkpoint: implausible tensor size");
    t.data.resize(numel);
    for (auto& v : t.data) v = get_f32(is);
    c.params.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

// Snapshot a parameter store as 32-bit floats, in registration order.
template <typename S>
std::vector<std::pair<std::string, Tensor<float>>> snapshot_params(const ParamStore<S>& store) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (size_t i = 0; i < store.size(); ++i) {
    const Parameter<S>& p = store.at(i);
    out.emplace_back(p.name, p.value.template cast<float>());
  }
  return out;
}

// Load saved tensors back into a live store. Every stored parameter must exist
// with the same shape; the store may not contain parameters the file lacks.
template <typename S>
void restore_params(ParamStore<S>& store,
                    const std::vector<std::pair<std::string, Tensor<float>>>& saved) {
  if (saved.size() != store.size())
    throw DataError("checkpoint: parameter count does not match the model");
  for (const auto& [name, t] : saved) {
    Parameter<S>* p = store.find(name);
    if (!p) throw DataError("checkpoint: model has no parameter '" + name + "'");
    if (p->value.shape != t.shape)
      throw DataError("checkpoint: shape mismatch for parameter '" + name + "'");
    p->value = t.template cast<S>();
  }
}

// Vocabulary round-trip helpers: the checkpoint stores the id-ordered token
// list, which reconstructs the exact same Vocab on load.
inline std::vector<std::string> vocab_tokens(const Vocab& v) { return v.id_to_token; }

inline Vocab vocab_from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 3 || tokens[Vocab::kPad] != "<pad>" || tokens[Vocab::kUnk] != "<unk>" ||
      tokens[Vocab::kSos] != "[SOS]")
    throw DataError("checkpoint: malformed vocabulary block");
  Vocab v;
  v.id_to_token = tokens;
  v.rebuild_index();
  return v;
}

inline LabelSpaces spaces_from_checkpoint(const Checkpoint& c) {
  LabelSpaces s;
  s.slot_labels = c.slot_labels;
  s.intent_labels = c.intent_labels;
  s.pos_labels = c.pos_labels;
  s.rebuild_index();
  return s;
}

}  // namespace synformer
