#include "mstr/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "mstr/errors.hpp"

namespace mstr {

std::string config_hash(const nlohmann::json& config) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::filesystem::path checkpoint_stem(const std::filesystem::path& path) {
  auto ext = path.extension();
  if (ext == ".pt" || ext == ".json") {
    auto stem = path;
    return stem.replace_extension();
  }
  return path;
}

void save_checkpoint(torch::nn::Module& module, const nlohmann::json& config,
                     const std::string& kind, int64_t step, const std::filesystem::path& stem) {
  std::error_code ec;
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path(), ec);
  torch::serialize::OutputArchive archive;
  module.save(archive);
  auto weights = stem;
  weights += ".pt";
  try {
    archive.save_to(weights.string());
  } catch (const c10::Error& e) {
    throw IOError("cannot write checkpoint " + weights.string() + ": " + e.what_without_backtrace());
  }
  auto sidecar = stem;
  sidecar += ".json";
  write_json_file(sidecar, {{"config_hash", config_hash(config)},
                            {"step", step},
                            {"kind", kind},
                            {"config", config}});
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
  auto sidecar = checkpoint_stem(path);
  sidecar += ".json";
  return read_json_file(sidecar);
}

void load_checkpoint_weights(torch::nn::Module& module, const std::filesystem::path& path) {
  auto weights = checkpoint_stem(path);
  weights += ".pt";
  if (!std::filesystem::exists(weights)) throw IOError("missing checkpoint " + weights.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(weights.string());
    module.load(archive);
  } catch (const c10::Error& e) {
    throw IOError("cannot load checkpoint " + weights.string() + ": " + e.what_without_backtrace());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IOError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw IOError("failed writing " + path.string());
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IOError("cannot append to " + path.string());
  out << record.dump() << '\n';
}

}  // namespace mstr
