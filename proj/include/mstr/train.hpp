#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstr/adadelta.hpp"
#include "mstr/decoder.hpp"
#include "mstr/objectives.hpp"
#include "mstr/synth.hpp"

namespace mstr {

/// Every hyperparameter of a recognition run. Serialized verbatim into the
/// run directory as config.json. Step budgets are desk-scale; the published
/// schedule is 50K warm-up and 600K end-to-end iterations.
struct TrainConfig {
  int stages = 2;
  int max_len = 25;
  double tau = 1.0;
  LossWeights lambda;
  std::vector<double> stage_loss_weights;  // empty: every stage weighs 1
  double lr = 1.0;
  double rho = 0.9;
  double eps = 1e-6;
  double clip_norm = 5.0;
  int batch_size = 32;
  int warmup_steps = 500;   // stage-0-only phase
  int total_steps = 5000;   // includes the warm-up
  uint64_t seed = 0;
  FeedbackMode feedback = FeedbackMode::kGumbelST;
  LaterInit later_init = LaterInit::kZeros;
  ModelDims dims;
  std::string train_manifest;
  std::string val_manifest;
  std::string semantic_checkpoint;  // optional pretrained omega
  std::string out_dir = "runs/default";
  int checkpoint_every = 1000;
  int eval_every = 500;
  int log_every = 50;

  /// Aborts bad configs before any training step. Throws ConfigError.
  void validate() const;
  DecoderConfig decoder_config() const;
  nlohmann::json to_json() const;
  /// Missing keys keep defaults; unknown keys raise ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepStats {
  int step = 0;
  int phase = 0;  // 0 warm-up (stage 0 only), 1 end-to-end
  double l_c = 0.0;
  double l_v = 0.0;
  double l_s = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct EvalReport {
  std::vector<double> stage_wra;
  std::vector<double> stage_mean_edit_distance;
  int64_t count = 0;

  nlohmann::json to_json() const;
};

/// Copies a pretrained semantic reasoner (encoder, lift and the first 37
/// embedding rows) into the recognizer.
void load_semantic_weights(Recognizer& model, const std::filesystem::path& checkpoint);

/// Inference over samples in fixed-size chunks; per-stage predictions.
std::vector<std::vector<std::string>> predict_stages(Recognizer& model,
                                                     const std::vector<LabeledImage>& samples,
                                                     int batch_size = 64);

EvalReport evaluate(Recognizer& model, const std::vector<LabeledImage>& samples,
                    int batch_size = 64);

/// Warm-up then end-to-end optimization over an in-memory training set.
class Trainer {
 public:
  Trainer(const TrainConfig& config, std::vector<LabeledImage> train_set);

  /// One optimizer step on the next batch; returns its loss breakdown.
  StepStats train_step();
  int step() const { return step_; }
  bool done() const { return step_ >= config_.total_steps; }

  Recognizer& model() { return model_; }
  const TrainConfig& config() const { return config_; }

 private:
  Batch next_batch();

  TrainConfig config_;
  std::vector<LabeledImage> train_set_;
  Recognizer model_{nullptr};
  std::unique_ptr<Adadelta> optimizer_;
  at::Generator noise_;
  std::mt19937_64 order_rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int step_ = 0;
};

struct RunCallbacks {
  std::function<void(const StepStats&)> on_step;
  std::function<void(int step, const EvalReport&)> on_eval;
};

/// File-driven training: loads manifests, writes config.json, metrics.jsonl
/// and checkpoints under out_dir, returns the final evaluation (validation
/// split when given, else training split).
EvalReport run_training(const TrainConfig& config, const RunCallbacks& callbacks = {});

/// Rebuilds a recognizer from a checkpoint written by run_training.
Recognizer load_recognizer(const std::filesystem::path& checkpoint);

}  // namespace mstr
