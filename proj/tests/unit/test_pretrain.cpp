#include <gtest/gtest.h>

#include <fstream>

#include "mstr/checkpoint.hpp"
#include "mstr/errors.hpp"
#include "mstr/pretrain.hpp"
#include "mstr/synth.hpp"
#include "test_util.hpp"

namespace mstr {
namespace {

std::filesystem::path write_corpus(const TempDir& dir, const std::vector<std::string>& words) {
  auto path = dir.path() / "corpus.txt";
  std::ofstream out(path);
  for (const auto& w : words) out << w << '\n';
  return path;
}

PretrainConfig tiny_config(const TempDir& dir, const std::filesystem::path& corpus, int steps) {
  PretrainConfig config;
  config.corpus = corpus;
  config.out_dir = dir.path() / "out";
  config.steps = steps;
  config.batch_size = 16;
  config.log_every = 5;
  config.dims = tiny_dims();
  return config;
}

TEST(PretrainConfig, ValidationAndJson) {
  PretrainConfig config;
  EXPECT_NO_THROW(config.validate());
  config.mask_rate = 0.0;
  EXPECT_THROW(config.validate(), ConfigError);
  config.mask_rate = 1.0;
  EXPECT_THROW(config.validate(), ConfigError);
  config.mask_rate = 0.2;
  config.steps = 17;
  config.dims = tiny_dims();
  auto back = PretrainConfig::from_json(config.to_json());
  EXPECT_EQ(back.steps, 17);
  EXPECT_DOUBLE_EQ(back.mask_rate, 0.2);
  EXPECT_EQ(back.dims.hidden_dim, 8);
}

TEST(Pretrain, ZeroStepsKeepsInitialization) {
  TempDir dir;
  auto config = tiny_config(dir, write_corpus(dir, {"cat", "dog"}), 0);
  config.seed = 4;
  auto result = pretrain_semantic(config);
  EXPECT_TRUE(result.history.empty());
  torch::manual_seed(4);
  MaskedLanguageModel fresh(config.dims);
  auto loaded = load_semantic_checkpoint(result.checkpoint);
  auto fresh_params = fresh->named_parameters();
  for (const auto& p : loaded->named_parameters()) {
    EXPECT_TRUE(torch::equal(p.value(), fresh_params[p.key()])) << p.key();
  }
  auto manifest = read_checkpoint_manifest(result.checkpoint);
  EXPECT_EQ(manifest["kind"], "semantic");
  EXPECT_EQ(manifest["step"], 0);
  EXPECT_EQ(manifest["config_hash"], config_hash(config.to_json()));
}

TEST(Pretrain, UntrainedModelSitsAtChance) {
  torch::manual_seed(0);
  MaskedLanguageModel model(tiny_dims());
  auto words = make_toy_lexicon(1000, 1);
  const double acc = evaluate_masked(model, words, 5);
  EXPECT_NEAR(acc, 1.0 / 37.0, 0.02);
  EXPECT_EQ(acc, evaluate_masked(model, words, 5));
}

TEST(Pretrain, MemorizesSingleWordCorpus) {
  torch::manual_seed(1);
  MaskedLanguageModel model(tiny_dims());
  PretrainConfig config;
  config.steps = 250;
  config.batch_size = 8;
  config.mask_rate = 0.3;
  config.dims = tiny_dims();
  auto history = train_masked_model(model, {"aeroplane"}, config);
  ASSERT_FALSE(history.empty());
  EXPECT_LT(history.back().loss, history.front().loss);
  EXPECT_GE(evaluate_masked(model, {"aeroplane"}, 3, 0.3, 16), 0.95);
}

TEST(Pretrain, WritesMetricsAndRoundTrips) {
  TempDir dir;
  auto words = make_toy_lexicon(50, 2);
  auto config = tiny_config(dir, write_corpus(dir, words), 20);
  std::vector<PretrainRecord> seen;
  auto result = pretrain_semantic(config, [&](const PretrainRecord& r) { seen.push_back(r); });
  ASSERT_EQ(result.history.size(), 4u);
  EXPECT_EQ(seen.size(), 4u);
  std::ifstream metrics(config.out_dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    auto record = nlohmann::json::parse(line);
    EXPECT_TRUE(record.contains("step") && record.contains("loss") && record.contains("masked_acc"));
    ++lines;
  }
  EXPECT_EQ(lines, 4);

  auto first = load_semantic_checkpoint(result.checkpoint);
  auto second = load_semantic_checkpoint(config.out_dir / "semantic.pt");
  EXPECT_EQ(evaluate_masked(first, words, 9), evaluate_masked(second, words, 9));
}

TEST(Pretrain, DeterministicForFixedSeed) {
  auto run = [] {
    torch::manual_seed(3);
    MaskedLanguageModel model(tiny_dims());
    PretrainConfig config;
    config.steps = 10;
    config.batch_size = 8;
    config.log_every = 1;
    config.seed = 3;
    config.dims = tiny_dims();
    return train_masked_model(model, make_toy_lexicon(40, 3), config);
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].loss, b[i].loss);
}

TEST(Pretrain, InputErrors) {
  TempDir dir;
  auto missing = tiny_config(dir, dir.path() / "absent.txt", 1);
  EXPECT_THROW(pretrain_semantic(missing), IOError);
  auto bad = tiny_config(dir, write_corpus(dir, {"fine", "not-fine"}), 1);
  EXPECT_THROW(pretrain_semantic(bad), CharsetError);
  EXPECT_THROW(load_semantic_checkpoint(dir.path() / "nothing"), IOError);
}

}  // namespace
}  // namespace mstr
