#include "mstr/train.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "mstr/checkpoint.hpp"
#include "mstr/config_io.hpp"
#include "mstr/errors.hpp"
#include "mstr/pretrain.hpp"

namespace mstr {

void TrainConfig::validate() const {
  decoder_config().validate();
  if (lambda.cls < 0 || lambda.visual < 0 || lambda.semantic < 0) {
    throw ConfigError("lambda weights must be non-negative");
  }
  if (!stage_loss_weights.empty() &&
      static_cast<int>(stage_loss_weights.size()) != stages + 1) {
    throw ConfigError("stage_loss_weights needs one entry per stage (" +
                      std::to_string(stages + 1) + ")");
  }
  for (double w : stage_loss_weights) {
    if (w < 0) throw ConfigError("stage_loss_weights must be non-negative");
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (warmup_steps < 0 || total_steps < 0) throw ConfigError("step counts must be >= 0");
  if (warmup_steps > total_steps) throw ConfigError("warmup_steps exceeds total_steps");
  if (checkpoint_every < 0 || eval_every < 0 || log_every < 0) {
    throw ConfigError("cadences must be >= 0");
  }
}

DecoderConfig TrainConfig::decoder_config() const {
  DecoderConfig d;
  d.num_stages = stages;
  d.max_len = max_len;
  d.tau = tau;
  d.feedback = feedback;
  d.later_init = later_init;
  return d;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"stages", stages},
          {"max_len", max_len},
          {"tau", tau},
          {"lambda", {lambda.cls, lambda.visual, lambda.semantic}},
          {"stage_loss_weights", stage_loss_weights},
          {"optimizer", {{"name", "adadelta"}, {"lr", lr}, {"rho", rho}, {"eps", eps},
                         {"clip_norm", clip_norm}}},
          {"batch_size", batch_size},
          {"warmup_steps", warmup_steps},
          {"total_steps", total_steps},
          {"seed", seed},
          {"feedback_mode", to_string(feedback)},
          {"later_init", to_string(later_init)},
          {"model", dims_to_json(dims)},
          {"train_manifest", train_manifest},
          {"val_manifest", val_manifest},
          {"semantic_checkpoint", semantic_checkpoint},
          {"out_dir", out_dir},
          {"checkpoint_every", checkpoint_every},
          {"eval_every", eval_every},
          {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "stages", "max_len", "tau", "lambda", "stage_loss_weights", "optimizer", "batch_size",
      "warmup_steps", "total_steps", "seed", "feedback_mode", "later_init", "model",
      "train_manifest", "val_manifest", "semantic_checkpoint", "out_dir", "checkpoint_every",
      "eval_every", "log_every", "_comment"};
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.stages = j.value("stages", c.stages);
    c.max_len = j.value("max_len", c.max_len);
    c.tau = j.value("tau", c.tau);
    if (j.contains("lambda")) {
      auto l = j.at("lambda").get<std::vector<double>>();
      if (l.size() != 3) throw ConfigError("lambda must have three entries");
      c.lambda = {l[0], l[1], l[2]};
    }
    c.stage_loss_weights = j.value("stage_loss_weights", c.stage_loss_weights);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.value("name", std::string("adadelta")) != "adadelta") {
        throw ConfigError("only the adadelta optimizer is supported");
      }
      c.lr = o.value("lr", c.lr);
      c.rho = o.value("rho", c.rho);
      c.eps = o.value("eps", c.eps);
      c.clip_norm = o.value("clip_norm", c.clip_norm);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("feedback_mode")) c.feedback = parse_feedback_mode(j.at("feedback_mode"));
    if (j.contains("later_init")) c.later_init = parse_later_init(j.at("later_init"));
    if (j.contains("model")) c.dims = dims_from_json(j.at("model"));
    c.train_manifest = j.value("train_manifest", c.train_manifest);
    c.val_manifest = j.value("val_manifest", c.val_manifest);
    c.semantic_checkpoint = j.value("semantic_checkpoint", c.semantic_checkpoint);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.log_every = j.value("log_every", c.log_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return c;
}

nlohmann::json EvalReport::to_json() const {
  return {{"stage_wra", stage_wra},
          {"stage_mean_edit_distance", stage_mean_edit_distance},
          {"count", count}};
}

void load_semantic_weights(Recognizer& model, const std::filesystem::path& checkpoint) {
  if (!model->semantic_reasoner) throw ConfigError("S = 0 model has no semantic reasoner");
  auto mlm = load_semantic_checkpoint(checkpoint);
  torch::NoGradGuard no_grad;
  auto copy_module = [](torch::nn::Module& dst, torch::nn::Module& src, const std::string& what) {
    auto src_params = src.named_parameters();
    for (auto& item : dst.named_parameters()) {
      const auto* from = src_params.find(item.key());
      if (from == nullptr || !from->sizes().equals(item.value().sizes())) {
        throw ConfigError(what + " checkpoint does not match the model widths (" + item.key() + ")");
      }
      item.value().copy_(*from);
    }
  };
  copy_module(*model->semantic_reasoner, *mlm->encoder, "semantic reasoner");
  copy_module(*model->semantic_lift, *mlm->lift, "semantic lift");
  if (mlm->table.size(1) != model->embedding->weight.size(1)) {
    throw ConfigError("semantic checkpoint embedding width differs from the model");
  }
  model->embedding->weight.copy_(mlm->table.slice(0, 0, kNumClasses));
}

std::vector<std::vector<std::string>> predict_stages(Recognizer& model,
                                                     const std::vector<LabeledImage>& samples,
                                                     int batch_size) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  std::vector<std::vector<std::string>> out(static_cast<size_t>(model->config().num_stages + 1));
  for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
    const auto end = std::min(samples.size(), begin + static_cast<size_t>(batch_size));
    std::vector<LabeledImage> chunk(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                    samples.begin() + static_cast<std::ptrdiff_t>(end));
    auto outputs = model->run_multistage(make_batch(chunk).images, RunMode::kInfer);
    for (size_t s = 0; s < outputs.size(); ++s) {
      auto texts = RecognizerImpl::decode_text(outputs[s]);
      out[s].insert(out[s].end(), texts.begin(), texts.end());
    }
  }
  model->train(was_training);
  return out;
}

EvalReport evaluate(Recognizer& model, const std::vector<LabeledImage>& samples, int batch_size) {
  EvalReport report;
  report.count = static_cast<int64_t>(samples.size());
  std::vector<std::string> truths;
  truths.reserve(samples.size());
  for (const auto& s : samples) truths.push_back(decode_sequence(s.label.indices));
  for (const auto& preds : predict_stages(model, samples, batch_size)) {
    report.stage_wra.push_back(samples.empty() ? 0.0 : word_recognition_accuracy(preds, truths));
    double dist = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) dist += char_edit_distance(preds[i], truths[i]);
    report.stage_mean_edit_distance.push_back(samples.empty() ? 0.0 : dist / preds.size());
  }
  return report;
}

Trainer::Trainer(const TrainConfig& config, std::vector<LabeledImage> train_set)
    : config_(config),
      train_set_(std::move(train_set)),
      noise_(make_generator(config.seed + 1)),
      order_rng_(config.seed + 2) {
  config_.validate();
  if (train_set_.empty()) throw ConfigError("training set is empty");
  torch::manual_seed(config_.seed);
  model_ = Recognizer(config_.dims, config_.decoder_config());
  if (!config_.semantic_checkpoint.empty() && config_.stages >= 1) {
    load_semantic_weights(model_, config_.semantic_checkpoint);
  }
  optimizer_ = std::make_unique<Adadelta>(
      model_->parameters(), AdadeltaOptions{.lr = config_.lr, .rho = config_.rho,
                                            .eps = config_.eps, .clip_norm = config_.clip_norm});
  order_.resize(train_set_.size());
  std::iota(order_.begin(), order_.end(), size_t{0});
  cursor_ = order_.size();
}

Batch Trainer::next_batch() {
  std::vector<LabeledImage> chunk;
  chunk.reserve(static_cast<size_t>(config_.batch_size));
  while (static_cast<int>(chunk.size()) < config_.batch_size) {
    if (cursor_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), order_rng_);
      cursor_ = 0;
    }
    chunk.push_back(train_set_[order_[cursor_++]]);
  }
  return make_batch(chunk);
}

StepStats Trainer::train_step() {
  model_->train();
  const int phase = step_ < config_.warmup_steps ? 0 : 1;
  auto batch = next_batch();
  Targets targets{batch.targets(), batch.mask()};

  auto outputs = model_->run_multistage(batch.images, RunMode::kTrain, &targets, &noise_,
                                        phase == 0 ? 0 : config_.stages);
  auto ce = stage_cross_entropy(outputs, targets,
                                phase == 0 ? std::vector<double>{} : config_.stage_loss_weights);
  torch::Tensor l_v, l_s;
  if (phase == 1 && config_.stages >= 1) {
    std::tie(l_v, l_s) = auxiliary_losses(outputs, targets, model_->visual_aux_head,
                                          model_->semantic_aux_head);
  } else {
    l_v = torch::zeros({});
    l_s = torch::zeros({});
  }
  auto loss = total_loss(ce.l_c, l_v, l_s, config_.lambda);

  optimizer_->zero_grad();
  loss.total.backward();
  StepStats stats;
  stats.grad_norm = optimizer_->step();
  ++step_;
  stats.step = step_;
  stats.phase = phase;
  stats.l_c = loss.l_c.item<double>();
  stats.l_v = loss.l_v.item<double>();
  stats.l_s = loss.l_s.item<double>();
  stats.total = loss.total.item<double>();
  return stats;
}

Recognizer load_recognizer(const std::filesystem::path& checkpoint) {
  auto manifest = read_checkpoint_manifest(checkpoint);
  if (manifest.value("kind", std::string()) != "recognizer") {
    throw IOError(checkpoint.string() + " is not a recognizer checkpoint");
  }
  auto config = TrainConfig::from_json(manifest.at("config"));
  Recognizer model(config.dims, config.decoder_config());
  load_checkpoint_weights(*model, checkpoint);
  model->eval();
  return model;
}

EvalReport run_training(const TrainConfig& config, const RunCallbacks& callbacks) {
  config.validate();
  if (config.train_manifest.empty()) throw ConfigError("train_manifest is required");
  auto train_set = load_manifest_samples(config.train_manifest);
  std::vector<LabeledImage> val_set;
  if (!config.val_manifest.empty()) val_set = load_manifest_samples(config.val_manifest);

  const std::filesystem::path out_dir = config.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "checkpoints", ec);
  if (ec) throw IOError("cannot create run directory " + out_dir.string());
  const auto config_json = config.to_json();
  write_json_file(out_dir / "config.json", config_json);
  const auto metrics = out_dir / "metrics.jsonl";
  std::filesystem::remove(metrics, ec);

  Trainer trainer(config, train_set);
  const auto& eval_set = val_set.empty() ? train_set : val_set;
  const auto hash = config_hash(config_json);
  auto checkpoint = [&](const std::string& name) {
    auto stem = out_dir / "checkpoints" / name;
    save_checkpoint(*trainer.model(), config_json, "recognizer", trainer.step(), stem);
    return stem;
  };
  auto run_eval = [&] {
    auto report = evaluate(trainer.model(), eval_set);
    append_jsonl(metrics, {{"step", trainer.step()}, {"split", val_set.empty() ? "train" : "val"},
                           {"eval", report.to_json()}, {"config_hash", hash}});
    if (callbacks.on_eval) callbacks.on_eval(trainer.step(), report);
    return report;
  };

  while (!trainer.done()) {
    auto stats = trainer.train_step();
    if (config.log_every > 0 && (stats.step % config.log_every == 0 || stats.step == 1)) {
      append_jsonl(metrics, {{"step", stats.step}, {"phase", stats.phase}, {"loss", stats.total},
                             {"l_c", stats.l_c}, {"l_v", stats.l_v}, {"l_s", stats.l_s},
                             {"grad_norm", stats.grad_norm}});
    }
    if (callbacks.on_step) callbacks.on_step(stats);
    if (config.checkpoint_every > 0 && stats.step % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%07d", stats.step);
      checkpoint(name);
    }
    if (config.eval_every > 0 && stats.step % config.eval_every == 0 && !trainer.done()) run_eval();
  }
  checkpoint("final");
  return run_eval();
}

}  // namespace mstr
