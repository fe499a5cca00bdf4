#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstr/dims.hpp"
#include "mstr/reasoning.hpp"

namespace mstr {

struct PretrainConfig {
  std::filesystem::path corpus;    // one word per line
  std::filesystem::path out_dir;   // checkpoint + metrics.jsonl
  double mask_rate = 0.15;
  int steps = 3000;
  int batch_size = 64;
  double lr = 1.0;
  uint64_t seed = 0;
  int log_every = 100;
  ModelDims dims;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainRecord {
  int step = 0;
  double loss = 0.0;
  double masked_acc = 0.0;
};

struct PretrainResult {
  std::vector<PretrainRecord> history;
  std::filesystem::path checkpoint;  // stem, without extension
};

/// Tokenizes a word list into N x 25 label indices. Throws CharsetError/LengthError.
torch::Tensor encode_corpus(const std::vector<std::string>& words);

/// Masked-token pretraining of the semantic reasoner. Only the pretraining
/// table, the lift, the reasoning encoder and the mask head are trained.
/// Writes `<out_dir>/semantic.{pt,json}` and `<out_dir>/metrics.jsonl`.
PretrainResult pretrain_semantic(const PretrainConfig& config,
                                 const std::function<void(const PretrainRecord&)>& on_log = {});

/// Same loop on an in-memory corpus and model; used by the file-based runner.
std::vector<PretrainRecord> train_masked_model(MaskedLanguageModel& model,
                                               const std::vector<std::string>& words,
                                               const PretrainConfig& config,
                                               const std::function<void(const PretrainRecord&)>& on_log = {});

/// Top-1 accuracy over masked positions of a deterministic seeded corruption
/// of every corpus word (`passes` corruption rounds).
double evaluate_masked(MaskedLanguageModel& model, const std::vector<std::string>& words,
                       uint64_t seed, double mask_rate = 0.15, int passes = 4);

/// Loads a semantic checkpoint written by pretrain_semantic.
MaskedLanguageModel load_semantic_checkpoint(const std::filesystem::path& path);

}  // namespace mstr
