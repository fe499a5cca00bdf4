#include <gtest/gtest.h>

#include <cmath>

#include "mstr/decoder.hpp"
#include "mstr/errors.hpp"
#include "mstr/objectives.hpp"
#include "mstr/vocab.hpp"
#include "test_util.hpp"

namespace mstr {
namespace {

DecoderConfig config_with(int stages, FeedbackMode feedback = FeedbackMode::kGumbelST) {
  DecoderConfig config;
  config.num_stages = stages;
  config.feedback = feedback;
  return config;
}

Targets random_targets(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<torch::Tensor> rows, masks;
  for (int64_t i = 0; i < n; ++i) {
    std::string word(1 + rng() % 8, 'a');
    for (auto& c : word) c = static_cast<char>('a' + rng() % 26);
    auto label = encode_label(word);
    rows.push_back(torch::tensor(std::vector<int64_t>(label.indices.begin(), label.indices.end())));
    auto mask = torch::zeros({kMaxLen}, torch::kBool);
    mask.slice(0, 0, label.true_length).fill_(true);
    masks.push_back(mask);
  }
  return {torch::stack(rows), torch::stack(masks)};
}

TEST(DecoderConfig, Validation) {
  EXPECT_NO_THROW(config_with(0).validate());
  EXPECT_NO_THROW(config_with(2).validate());
  EXPECT_THROW(config_with(3).validate(), ConfigError);
  EXPECT_THROW(config_with(-1).validate(), ConfigError);
  auto bad_tau = config_with(1);
  bad_tau.tau = 0.0;
  EXPECT_THROW(bad_tau.validate(), ConfigError);
  EXPECT_EQ(parse_feedback_mode("hard_argmax"), FeedbackMode::kHardArgmax);
  EXPECT_EQ(to_string(FeedbackMode::kLogits), "logits");
  EXPECT_THROW(parse_feedback_mode("soft"), ConfigError);
  EXPECT_EQ(parse_later_init("holistic"), LaterInit::kHolistic);
}

TEST(Recognizer, StageShapesAndLevels) {
  torch::manual_seed(0);
  Recognizer model(tiny_dims(), config_with(2));
  auto images = torch::rand({2, 3, 32, 100});
  auto targets = random_targets(2, 0);
  auto gen = make_generator(0);
  for (auto mode : {RunMode::kTrain, RunMode::kInfer}) {
    auto outputs = model->run_multistage(images, mode, &targets, &gen);
    ASSERT_EQ(outputs.size(), 3u);
    const std::vector<std::vector<int64_t>> levels{{4, 25}, {8, 25}, {16, 50}};
    for (int s = 0; s < 3; ++s) {
      const auto& out = outputs[s];
      EXPECT_EQ(out.stage, s);
      EXPECT_EQ(out.logits.sizes(), (std::vector<int64_t>{2, 25, 37}));
      EXPECT_EQ(out.hidden.sizes(), (std::vector<int64_t>{2, 25, 8}));
      EXPECT_EQ(out.tokens.sizes(), (std::vector<int64_t>{2, 25, 37}));
      EXPECT_EQ(out.glimpses.sizes(), (std::vector<int64_t>{2, 25, 8}));
      EXPECT_EQ(out.attn_maps.sizes(),
                (std::vector<int64_t>{2, 25, levels[s][0], levels[s][1]}));
      auto sums = out.attn_maps.sum({2, 3});
      EXPECT_TRUE(torch::allclose(sums, torch::ones_like(sums), 0, 1e-5));
      EXPECT_GE(out.attn_maps.min().item<float>(), 0.0f);
      EXPECT_TRUE(torch::all(out.tokens.sum(-1) == 1.0).item<bool>());
      EXPECT_TRUE(torch::all(out.tokens.amax(-1) == 1.0).item<bool>());
      EXPECT_EQ(out.joint.has_value(), s >= 1);
      if (s >= 1) EXPECT_EQ(out.joint->joint.size(2), 16);
      if (mode == RunMode::kInfer) {
        EXPECT_TRUE(torch::equal(out.tokens.argmax(-1), argmax_lowest(out.logits)));
      }
    }
    EXPECT_TRUE(outputs[2].residual_hidden.defined());
    EXPECT_FALSE(outputs[1].residual_hidden.defined());
  }
}

TEST(Recognizer, PublishedWidths) {
  ModelDims dims;
  EXPECT_EQ(dims.later_query_dim(), 768);
  EXPECT_EQ(dims.later_input_dim(), 896);
  EXPECT_EQ(dims.stage0_input_dim(), 384);
  Recognizer model(dims, config_with(2));
  EXPECT_EQ(model->rnns[1]->weight_ih.size(1), 896);
  EXPECT_EQ(model->attentions[2]->query_proj->weight.sizes(), (std::vector<int64_t>{128, 768}));
  EXPECT_EQ(model->fusers[1]->mix->weight.sizes(), (std::vector<int64_t>{256, 768}));
  EXPECT_EQ(model->embedding->weight.sizes(), (std::vector<int64_t>{37, 128}));
}

TEST(Recognizer, SingleStageReduction) {
  Recognizer model(tiny_dims(), config_with(0));
  EXPECT_FALSE(model->visual_reasoner);
  EXPECT_FALSE(model->semantic_reasoner);
  EXPECT_EQ(model->rnns.size(), 1u);
  EXPECT_TRUE(model->fusers.empty());
  for (const auto& p : model->named_parameters()) {
    EXPECT_EQ(p.key().find("reasoner"), std::string::npos) << p.key();
  }
  auto outputs = model->run_multistage(torch::rand({1, 3, 32, 100}), RunMode::kInfer);
  ASSERT_EQ(outputs.size(), 1u);
  EXPECT_FALSE(outputs[0].joint.has_value());
}

TEST(Recognizer, SharedAndPerStageModules) {
  Recognizer model(tiny_dims(), config_with(2));
  EXPECT_NE(model->attentions[1].get(), model->attentions[2].get());
  EXPECT_NE(model->classifiers[1].get(), model->classifiers[2].get());
  EXPECT_NE(model->rnns[0].get(), model->rnns[1].get());
  int visual = 0, semantic = 0, embedding = 0;
  for (const auto& p : model->named_parameters()) {
    visual += p.key().rfind("visual_reasoner.", 0) == 0;
    semantic += p.key().rfind("semantic_reasoner.", 0) == 0;
    embedding += p.key().rfind("embedding.", 0) == 0;
  }
  const int per_encoder = static_cast<int>(make_reasoning_encoder(tiny_dims())->parameters().size());
  EXPECT_EQ(visual, per_encoder);
  EXPECT_EQ(semantic, per_encoder);
  EXPECT_EQ(embedding, 1);
}

TEST(Recognizer, TrainingNeedsLabels) {
  Recognizer model(tiny_dims(), config_with(1));
  EXPECT_THROW(model->run_multistage(torch::rand({1, 3, 32, 100}), RunMode::kTrain), ConfigError);
  EXPECT_THROW(model->run_multistage(torch::rand({1, 3, 32, 100}), RunMode::kInfer, nullptr,
                                     nullptr, 2),
               ConfigError);
}

TEST(Recognizer, LaterStagesNeverChangeEarlierOnes) {
  torch::manual_seed(6);
  Recognizer model(tiny_dims(), config_with(2));
  model->eval();
  torch::NoGradGuard no_grad;
  auto images = torch::rand({2, 3, 32, 100});
  auto partial = model->run_multistage(images, RunMode::kInfer, nullptr, nullptr, 1);
  auto full = model->run_multistage(images, RunMode::kInfer);
  ASSERT_EQ(partial.size(), 2u);
  EXPECT_TRUE(torch::equal(partial[0].logits, full[0].logits));
  EXPECT_TRUE(torch::equal(partial[1].logits, full[1].logits));
}

TEST(Recognizer, DeterministicForFixedSeeds) {
  auto run = [] {
    torch::manual_seed(12);
    Recognizer model(tiny_dims(), config_with(2));
    auto images = torch::rand({2, 3, 32, 100});
    auto targets = random_targets(2, 3);
    auto gen = make_generator(99);
    return model->run_multistage(images, RunMode::kTrain, &targets, &gen).back().logits;
  };
  auto a = run();
  auto b = run();
  EXPECT_LT((a - b).abs().max().item<float>(), 1e-6f);
}

TEST(Recognizer, StageZeroSingleStepMatchesHandComputedCell) {
  torch::manual_seed(13);
  ModelDims dims = tiny_dims();
  Recognizer model(dims, config_with(0));
  model->to(torch::kDouble);
  const int64_t D = dims.feature_dim, H = dims.hidden_dim;
  FeaturePyramid pyramid;
  pyramid.b_L = torch::randn({1, D, 1, 1}, torch::kDouble);  // 1x1 map: alpha is 1
  auto holistic = torch::randn({1, 2 * H}, torch::kDouble);
  auto out = model->decode_stage0(pyramid, holistic, RunMode::kInfer, nullptr, nullptr);

  auto params = model->named_parameters();
  auto h0 = torch::tanh(torch::matmul(params["backbone.init_proj.weight"], holistic[0]) +
                        params["backbone.init_proj.bias"]);
  auto g = pyramid.b_L.view({D});
  auto x = torch::cat({torch::zeros({dims.embed_dim}, torch::kDouble), g});
  auto& cell = model->rnns[0];
  auto gates = torch::matmul(cell->weight_ih, x) + cell->bias_ih +
               torch::matmul(cell->weight_hh, h0) + cell->bias_hh;
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> h1(H);
  for (int64_t k = 0; k < H; ++k) {
    const double i = sigmoid(gates[k].item<double>());
    const double c_hat = std::tanh(gates[2 * H + k].item<double>());
    const double o = sigmoid(gates[3 * H + k].item<double>());
    const double c1 = i * c_hat;  // previous cell state is zero
    h1[k] = o * std::tanh(c1);
    EXPECT_NEAR(out.hidden[0][0][k].item<double>(), h1[k], 1e-6);
  }
  auto w = model->classifiers[0]->weight;
  auto b = model->classifiers[0]->bias;
  for (int64_t c = 0; c < kNumClasses; ++c) {
    double logit = b[c].item<double>();
    for (int64_t k = 0; k < H; ++k) logit += w[c][k].item<double>() * h1[k];
    EXPECT_NEAR(out.logits[0][0][c].item<double>(), logit, 1e-6);
  }
  EXPECT_DOUBLE_EQ(out.attn_maps[0][0][0][0].item<double>(), 1.0);
  EXPECT_TRUE(torch::allclose(out.glimpses[0][0], g));
}

double final_stage_classifier0_grad(FeedbackMode feedback) {
  torch::manual_seed(14);
  Recognizer model(tiny_dims(), config_with(2, feedback));
  auto images = torch::rand({3, 3, 32, 100});
  auto targets = random_targets(3, 5);
  auto gen = make_generator(7);
  auto outputs = model->run_multistage(images, RunMode::kTrain, &targets, &gen);
  masked_cross_entropy(outputs.back().logits, targets.indices, targets.mask).backward();
  auto grad = model->classifiers[0]->weight.grad();
  return grad.defined() ? grad.norm().item<double>() : 0.0;
}

TEST(Recognizer, CrossStageGradientFlowsOnlyThroughRelaxedTokens) {
  EXPECT_GT(final_stage_classifier0_grad(FeedbackMode::kGumbelST), 1e-8);
  EXPECT_EQ(final_stage_classifier0_grad(FeedbackMode::kHardArgmax), 0.0);
  EXPECT_GT(final_stage_classifier0_grad(FeedbackMode::kLogits), 1e-8);
}

TEST(Recognizer, JointFeaturesDifferentiateThroughSoftPath) {
  torch::manual_seed(15);
  Recognizer model(tiny_dims(), config_with(1));
  model->to(torch::kDouble);
  model->eval();
  auto gen = make_generator(15);
  auto logits = torch::randn({1, 25, 37}, torch::kDouble).requires_grad_(true);
  auto noise = sample_gumbel_noise({1, 25, 37}, gen, torch::kFloat64);
  StageOutput prev;
  prev.hidden = torch::randn({1, 25, 8}, torch::kDouble);
  prev.logits = logits;
  prev.tokens = gumbel_softmax_st(logits, noise, 1.0).onehot;
  auto readout = torch::randn({1, 25, 16}, torch::kDouble);
  auto joint = model->reason_joint(prev, model->feedback_embedding(prev, RunMode::kTrain, nullptr));
  EXPECT_EQ(joint.joint.sizes(), (std::vector<int64_t>{1, 25, 16}));
  (joint.joint * readout).sum().backward();

  auto onehot = prev.tokens.detach().clone().requires_grad_(true);
  StageOutput frozen = prev;
  frozen.tokens = onehot;
  auto j = model->reason_joint(frozen, model->embedding->embed_onehot(onehot));
  (j.joint * readout).sum().backward();
  auto upstream = onehot.grad().detach();

  auto x = logits.detach().clone();
  auto soft_path = [&] { return (torch::softmax(x + noise, -1) * upstream).sum().item<double>(); };
  auto [a, n] = sampled_gradients(soft_path, x, logits.grad(), 80, 2);
  EXPECT_LT(relative_error(a, n), 1e-4);
  EXPECT_GT(logits.grad().norm().item<double>(), 0.0);
}

TEST(Recognizer, GroundTruthFeedbackUsesLabels) {
  Recognizer model(tiny_dims(), config_with(1, FeedbackMode::kGroundTruth));
  auto targets = random_targets(2, 8);
  StageOutput prev;
  prev.tokens = torch::zeros({2, 25, 37});
  prev.tokens.select(2, 0).fill_(1.0);
  auto train = model->feedback_embedding(prev, RunMode::kTrain, &targets);
  EXPECT_TRUE(torch::allclose(train, model->embedding->embed_index(targets.indices)));
  auto infer = model->feedback_embedding(prev, RunMode::kInfer, nullptr);
  EXPECT_TRUE(torch::allclose(infer, model->embedding->embed_onehot(prev.tokens)));
}

TEST(Recognizer, FinalStageResidualLayerNorm) {
  torch::manual_seed(16);
  Recognizer model(tiny_dims(), config_with(2));
  model->eval();
  torch::NoGradGuard no_grad;
  auto outputs = model->run_multistage(torch::rand({2, 3, 32, 100}), RunMode::kInfer);
  const auto& last = outputs.back();
  auto expected = model->residual_norm(last.hidden + outputs.front().hidden);
  EXPECT_TRUE(torch::allclose(last.residual_hidden, expected));
  EXPECT_TRUE(torch::allclose(last.logits, model->classifiers[2](last.residual_hidden), 1e-5, 1e-6));
  auto mean = last.residual_hidden.mean(-1);
  auto var = last.residual_hidden.var(-1, false);
  EXPECT_LT(mean.abs().max().item<float>(), 1e-5f);
  EXPECT_LT((var - 1).abs().max().item<float>(), 1e-3f);
  auto h0 = torch::randn({4, 8});
  EXPECT_TRUE(torch::allclose(model->residual_norm(torch::zeros({4, 8}) + h0), model->residual_norm(h0)));
}

TEST(Recognizer, ResidualLayerNormGradientCheck) {
  torch::manual_seed(17);
  torch::nn::LayerNorm norm(torch::nn::LayerNormOptions({8}));
  norm->to(torch::kDouble);
  {
    torch::NoGradGuard no_grad;
    norm->weight.uniform_(0.5, 1.5);
    norm->bias.uniform_(-0.5, 0.5);
  }
  auto h = torch::randn({3, 8}, torch::kDouble).requires_grad_(true);
  auto h0 = torch::randn({3, 8}, torch::kDouble);
  auto readout = torch::randn({3, 8}, torch::kDouble);
  (norm(h + h0) * readout).sum().backward();
  auto x = h.detach().clone();
  auto numeric = numeric_gradient([&] { return (norm(x + h0) * readout).sum().item<double>(); }, x);
  EXPECT_LT(relative_error(h.grad(), numeric), 1e-4);
}

TEST(Recognizer, DecodeTextStopsAtEndToken) {
  StageOutput stage;
  stage.logits = torch::zeros({2, 25, 37});
  stage.logits.select(2, 36).fill_(1.0);
  stage.logits[0][0][2] = 5.0;
  stage.logits[0][1][0] = 5.0;
  stage.logits[0][2][19] = 5.0;
  stage.logits[0][4][1] = 5.0;
  EXPECT_EQ(RecognizerImpl::decode_text(stage), (std::vector<std::string>{"cat", ""}));
}

}  // namespace
}  // namespace mstr
