#pragma once

#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "synformer/common.hpp"

namespace synformer {

// Flat key=value configuration with dotted namespaces. Every key has a default
// registered below; parsing rejects anything else, so typos fail fast. The
// resolved dump is sorted and canonical, which keeps run directories diffable
// and makes same-config detection trivial.
class Config {
 public:
  Config() { kv_ = defaults(); }

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"data.dir", ""},
        {"data.train", "train"},
        {"data.valid", "valid"},
        {"data.test", "test"},
        {"data.vectors", ""},
        {"data.min_count", "1"},
        {"embed.word_dim", "300"},
        {"embed.char_dim", "30"},
        {"embed.char_window", "3"},
        {"embed.positional", "true"},
        {"model.d_model", "768"},
        {"model.d_ff", "3072"},
        {"model.heads", "4"},
        {"model.x", "1"},
        {"model.y", "0"},
        {"model.z", "0"},
        {"model.d_biaffine", "200"},
        {"model.activation", "relu"},
        {"model.dropout", "0.1"},
        {"prior.tau", "1.0"},
        {"prior.mode", "full"},
        {"prior.max_depth", "0"},
        {"loss.c_dep", "1.0"},
        {"loss.c_pos", "1.0"},
        {"loss.batch_reduction", "mean"},
        {"mode", "joint"},
        {"use_dep", "true"},
        {"use_pos", "true"},
        {"train.batch_size", "32"},
        {"train.epochs", "100"},
        {"train.lr", "0.0005"},
        {"train.weight_decay", "0.1"},
        {"train.beta1", "0.9"},
        {"train.beta2", "0.999"},
        {"train.eps", "1e-7"},
        {"train.warmup_steps", "0"},
        {"train.clip_norm", "0"},
        {"train.selection", "auto"},
        {"train.shuffle", "true"},
        {"seed", "42"},
        {"run.dir", "run"},
    };
    return d;
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key: " + key);
    kv_[key] = value;
  }

  void parse_line(const std::string& raw, const std::string& where) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') return;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  void load_file(const std::string& path) {
    auto lines = read_lines_or_config_error(path);
    for (size_t i = 0; i < lines.size(); ++i)
      parse_line(lines[i], path + " line " + std::to_string(i + 1));
  }

  void load_string(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) parse_line(line, "config text line " + std::to_string(++n));
  }

  // "--set key=value" payloads from the command line; override-wins.
  void apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
      size_t eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("override must be key=value: " + o);
      set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
  }

  const std::string& get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  int get_int(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      size_t used = 0;
      int out = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
  }

  double get_double(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      size_t used = 0;
      double out = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected number, got '" + v + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected boolean, got '" + v + "'");
  }

  // Sorted canonical dump; also the checkpoint's embedded config format.
  std::string resolved() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
    return out;
  }

  // Cross-field checks shared by every command. Throws ConfigError.
  void validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    int d_model = get_int("model.d_model"), heads = get_int("model.heads");
    require(d_model > 0 && heads > 0, "model.d_model and model.heads must be positive");
    require(d_model % heads == 0, "model.d_model must be divisible by model.heads");
    require(get_int("model.x") >= 0 && get_int("model.y") >= 0 && get_int("model.z") >= 0,
            "layer counts x/y/z must be nonnegative");
    require(get_int("model.d_ff") > 0, "model.d_ff must be positive");
    require(get_int("model.d_biaffine") > 0, "model.d_biaffine must be positive");
    double p = get_double("model.dropout");
    require(p >= 0.0 && p < 1.0, "model.dropout must be in [0, 1)");
    require(get_double("prior.tau") > 0.0, "prior.tau must be positive");
    const std::string& pm = get_string("prior.mode");
    require(pm == "full" || pm == "parent_only", "prior.mode must be full or parent_only");
    require(get_int("prior.max_depth") >= 0, "prior.max_depth must be nonnegative");
    const std::string& act = get_string("model.activation");
    require(act == "relu" || act == "gelu", "model.activation must be relu or gelu");
    const std::string& mode = get_string("mode");
    require(mode == "joint" || mode == "sf" || mode == "id",
            "mode must be joint, sf, or id");
    const std::string& red = get_string("loss.batch_reduction");
    require(red == "mean" || red == "sum", "loss.batch_reduction must be mean or sum");
    require(get_double("loss.c_dep") >= 0.0 && get_double("loss.c_pos") >= 0.0,
            "loss coefficients must be nonnegative");
    require(get_int("data.min_count") >= 1, "data.min_count must be >= 1");
    require(get_int("train.batch_size") > 0, "train.batch_size must be positive");
    require(get_int("train.epochs") > 0, "train.epochs must be positive");
    require(get_double("train.lr") > 0.0, "train.lr must be positive");
    require(get_double("train.weight_decay") >= 0.0, "train.weight_decay must be nonnegative");
    require(get_int("train.warmup_steps") >= 0, "train.warmup_steps must be nonnegative");
    require(get_double("train.clip_norm") >= 0.0, "train.clip_norm must be nonnegative");
    const std::string& sel = get_string("train.selection");
    require(sel == "auto" || sel == "slot_f1" || sel == "intent_acc" ||
                sel == "slot_f1+intent_acc",
            "train.selection must be auto, slot_f1, intent_acc, or slot_f1+intent_acc");
    require(get_int("embed.word_dim") > 0 && get_int("embed.char_dim") > 0,
            "embedding dims must be positive");
    require(get_int("embed.char_window") >= 1, "embed.char_window must be >= 1");
    // make the boolean keys fail here rather than mid-run
    get_bool("use_dep");
    get_bool("use_pos");
    get_bool("embed.positional");
    get_bool("train.shuffle");
    get_int("seed");
  }

  bool operator==(const Config& o) const { return kv_ == o.kv_; }

 private:
  static std::vector<std::string> read_lines_or_config_error(const std::string& path) {
    try {
      return read_lines(path);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }

  std::map<std::string, std::string> kv_;
};

// Config paths resolve against the working directory first, then the directory
// named by this environment variable (when set).
inline std::string resolve_config_path(const std::string& path) {
  if (file_exists(path)) return path;
  if (!path.empty() && path[0] != '/') {
    const char* dir = std::getenv("SYNFORMER_CONFIG_DIR");
    if (dir && *dir) {
      std::string alt = std::string(dir) + "/" + path;
      if (file_exists(alt)) return alt;
    }
  }
  return path;  // let the open fail with the original name
}

}  // namespace synformer
