#include "mgt/config.hpp"

#include <fstream>

#include "mgt/error.hpp"

namespace mgt::config {

using nlohmann::json;

json default_config() {
  return json{
      {"seed", 42},
      {"dsp",
       {{"sample_rate", 22050},
        {"n_fft", 2048},
        {"hop", 1035},          // 1 + floor(661500/1035) = 640 frames
        {"nominal_hop", 512},   // the conventional analysis hop, kept selectable
        {"n_mels", 128},
        {"fmin_hz", 0.0},
        {"fmax_hz", 11025.0},
        {"db_floor", -80.0}}},
      {"features",
       {{"n_mfcc", 20},
        {"contrast_alpha", 0.02},
        {"contrast_base_hz", 200.0},
        {"rolloff_fraction", 0.85},
        {"tempo_min_bpm", 40.0},
        {"tempo_max_bpm", 200.0},
        {"tempo_hop", 256}}},
      {"model",
       {{"conv_channels", {64, 128, 128}},
        {"kernel_width", 5},
        {"pool_width", 2},
        {"lstm_hidden", 96},
        {"dense_hidden", 64},
        {"dropout", 0.3},
        {"l2", 1e-4},
        {"knn_k", 5},
        {"logreg_lambda", 1e-4}}},
      {"train",
       {{"batch_size", 32},
        {"max_epochs", 100},
        {"patience", 10},
        {"val_fraction", 0.1},
        {"min_improvement", 1e-4},
        {"lr", 1e-3},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"eps", 1e-8}}},
  };
}

namespace {

void merge_checked(json& base, const json& patch, const std::string& prefix) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      fail(ErrorKind::config, "unknown config key '" + path + "'");
    }
    if (base[it.key()].is_object() && it.value().is_object()) {
      merge_checked(base[it.key()], it.value(), path);
    } else if (base[it.key()].is_object() != it.value().is_object()) {
      fail(ErrorKind::config, "config key '" + path + "' has the wrong structure");
    } else {
      base[it.key()] = it.value();
    }
  }
}

json* walk(json& root, const std::string& dotted, std::string* leaf) {
  json* node = &root;
  size_t pos = 0;
  while (true) {
    const size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (dot == std::string::npos) {
      *leaf = key;
      return node;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) return nullptr;
    node = &(*node)[key];
    pos = dot + 1;
  }
}

}  // namespace

json resolve(const std::optional<std::string>& config_path,
             const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (config_path) {
    merge_checked(cfg, read_json(*config_path), "");
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::config, "--set expects key.path=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    std::string leaf;
    json* node = walk(cfg, key, &leaf);
    if (node == nullptr || !node->contains(leaf)) {
      fail(ErrorKind::config, "unknown config key '" + key + "'");
    }
    json& slot = (*node)[leaf];
    try {
      if (slot.is_string()) {
        slot = value;
      } else {
        slot = json::parse(value);  // numbers, booleans, arrays
      }
    } catch (const std::exception&) {
      fail(ErrorKind::config, "cannot parse value for '" + key + "': " + value);
    }
  }
  return cfg;
}

std::string hash_of(const json& cfg) {
  const std::string dump = cfg.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string dsp_hash_of(const json& cfg) {
  json sub;
  sub["dsp"] = cfg.at("dsp");
  sub["features"] = cfg.at("features");
  return hash_of(sub);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write json: " + path);
  f << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open json: " + path);
  try {
    json j;
    f >> j;
    return j;
  } catch (const std::exception& e) {
    fail(ErrorKind::format, "malformed json in " + path + ": " + e.what());
  }
}

}  // namespace mgt::config
