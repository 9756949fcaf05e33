#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mgt::config {

// Every tunable the pipeline consumes, with its shipped default. Resolution
// order: defaults < config file < --set flags; unknown keys are rejected so
// typos cannot silently fall back to defaults.
nlohmann::json default_config();

nlohmann::json resolve(const std::optional<std::string>& config_path,
                       const std::vector<std::string>& overrides);

// FNV-1a over the canonical (sorted-key) dump.
std::string hash_of(const nlohmann::json& cfg);
// Hash of the subtree that determines extracted features/spectrograms;
// train/eval compare it to reject mixing artifacts from different DSP
// settings.
std::string dsp_hash_of(const nlohmann::json& cfg);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace mgt::config
