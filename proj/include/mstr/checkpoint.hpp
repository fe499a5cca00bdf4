#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace mstr {

/// 64-bit FNV-1a over the compact JSON dump; stable across runs and hosts.
std::string config_hash(const nlohmann::json& config);

/// Writes `<stem>.pt` (module weights and buffers) and `<stem>.json`
/// ({config_hash, step, config, kind}).
void save_checkpoint(torch::nn::Module& module, const nlohmann::json& config,
                     const std::string& kind, int64_t step, const std::filesystem::path& stem);

/// Reads the sidecar JSON of a checkpoint; accepts either the stem, the .pt or
/// the .json path. Throws IOError.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Loads weights into a module constructed from the manifest's config.
void load_checkpoint_weights(torch::nn::Module& module, const std::filesystem::path& path);

std::filesystem::path checkpoint_stem(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

/// Appends one compact JSON record plus newline.
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);

}  // namespace mstr
