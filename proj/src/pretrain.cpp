#include "mstr/pretrain.hpp"

#include <random>

#include "mstr/adadelta.hpp"
#include "mstr/checkpoint.hpp"
#include "mstr/config_io.hpp"
#include "mstr/errors.hpp"
#include "mstr/synth.hpp"
#include "mstr/vocab.hpp"

namespace mstr {

void PretrainConfig::validate() const {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"corpus", corpus.string()}, {"out_dir", out_dir.string()},
          {"mask_rate", mask_rate},    {"steps", steps},
          {"batch_size", batch_size},  {"lr", lr},
          {"seed", seed},              {"log_every", log_every},
          {"model", dims_to_json(dims)}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  try {
    c.corpus = j.value("corpus", std::string());
    c.out_dir = j.value("out_dir", std::string());
    c.mask_rate = j.value("mask_rate", c.mask_rate);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("model")) c.dims = dims_from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad pretraining config: ") + e.what());
  }
  return c;
}

torch::Tensor encode_corpus(const std::vector<std::string>& words) {
  auto out = torch::empty({static_cast<int64_t>(words.size()), kMaxLen}, torch::kInt64);
  auto acc = out.accessor<int64_t, 2>();
  for (size_t n = 0; n < words.size(); ++n) {
    auto label = encode_label(words[n]);
    for (int t = 0; t < kMaxLen; ++t) acc[n][t] = label.indices[t];
  }
  return out;
}

namespace {

std::pair<int64_t, int64_t> masked_hits(const torch::Tensor& logits, const MaskedBatch& batch) {
  auto pred = logits.argmax(-1);
  auto hit = (pred == batch.target_tokens) & batch.predict_mask;
  return {hit.sum().item<int64_t>(), batch.predict_mask.sum().item<int64_t>()};
}

}  // namespace

std::vector<PretrainRecord> train_masked_model(
    MaskedLanguageModel& model, const std::vector<std::string>& words,
    const PretrainConfig& config, const std::function<void(const PretrainRecord&)>& on_log) {
  config.validate();
  if (words.empty()) throw ConfigError("pretraining corpus is empty");
  auto tokens = encode_corpus(words);
  std::mt19937_64 rng(config.seed);
  Adadelta optimizer(model->parameters(), AdadeltaOptions{.lr = config.lr});
  model->train();

  std::vector<PretrainRecord> history;
  double loss_sum = 0.0;
  int64_t hits = 0, total = 0;
  int window = 0;
  for (int step = 1; step <= config.steps; ++step) {
    std::vector<int64_t> rows(static_cast<size_t>(config.batch_size));
    for (auto& r : rows) r = static_cast<int64_t>(rng() % words.size());
    auto batch = corrupt_for_pretraining(tokens.index_select(0, torch::tensor(rows)),
                                         config.mask_rate, rng);
    optimizer.zero_grad();
    auto logits = model->predict_masked(batch);
    auto loss = MaskedLanguageModelImpl::masked_loss(logits, batch);
    loss.backward();
    optimizer.step();

    auto [h, c] = masked_hits(logits.detach(), batch);
    hits += h;
    total += c;
    loss_sum += loss.item<double>();
    ++window;
    if (step % std::max(1, config.log_every) == 0 || step == config.steps) {
      PretrainRecord rec{step, loss_sum / window,
                         total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0};
      history.push_back(rec);
      if (on_log) on_log(rec);
      loss_sum = 0.0;
      hits = total = 0;
      window = 0;
    }
  }
  return history;
}

PretrainResult pretrain_semantic(const PretrainConfig& config,
                                 const std::function<void(const PretrainRecord&)>& on_log) {
  config.validate();
  auto words = read_word_list(config.corpus);
  if (words.empty()) throw ConfigError("corpus " + config.corpus.string() + " has no words");
  for (const auto& w : words) encode_label(w);

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IOError("cannot create " + config.out_dir.string());
  const auto metrics = config.out_dir / "metrics.jsonl";
  std::filesystem::remove(metrics, ec);

  torch::manual_seed(config.seed);
  MaskedLanguageModel model(config.dims);
  PretrainResult result;
  result.history = train_masked_model(model, words, config, [&](const PretrainRecord& rec) {
    append_jsonl(metrics, {{"step", rec.step}, {"loss", rec.loss}, {"masked_acc", rec.masked_acc}});
    if (on_log) on_log(rec);
  });
  result.checkpoint = config.out_dir / "semantic";
  save_checkpoint(*model, config.to_json(), "semantic", config.steps, result.checkpoint);
  return result;
}

double evaluate_masked(MaskedLanguageModel& model, const std::vector<std::string>& words,
                       uint64_t seed, double mask_rate, int passes) {
  if (words.empty()) return 0.0;
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  auto tokens = encode_corpus(words);
  std::mt19937_64 rng(seed);
  int64_t hits = 0, total = 0;
  for (int pass = 0; pass < passes; ++pass) {
    auto batch = corrupt_for_pretraining(tokens, mask_rate, rng);
    auto [h, c] = masked_hits(model->predict_masked(batch), batch);
    hits += h;
    total += c;
  }
  model->train(was_training);
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

MaskedLanguageModel load_semantic_checkpoint(const std::filesystem::path& path) {
  auto manifest = read_checkpoint_manifest(path);
  if (manifest.value("kind", std::string()) != "semantic") {
    throw IOError(path.string() + " is not a semantic-reasoner checkpoint");
  }
  auto config = PretrainConfig::from_json(manifest.at("config"));
  MaskedLanguageModel model(config.dims);
  load_checkpoint_weights(*model, path);
  return model;
}

}  // namespace mstr
