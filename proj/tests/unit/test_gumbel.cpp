#include <gtest/gtest.h>

#include <cmath>

#include "mstr/errors.hpp"
#include "mstr/gumbel.hpp"
#include "test_util.hpp"

namespace mstr {
namespace {

bool is_exact_onehot(const torch::Tensor& t) {
  auto sums = t.sum(-1);
  auto ones = (t == 1.0).sum(-1);
  auto zeros = (t == 0.0).sum(-1);
  return torch::all(sums == 1.0).item<bool>() && torch::all(ones == 1).item<bool>() &&
         torch::all(zeros == t.size(-1) - 1).item<bool>();
}

TEST(GumbelNoise, ShapeAndClosedForm) {
  auto gen = make_generator(0);
  EXPECT_EQ(sample_gumbel_noise({4, 37}, gen).sizes(), (std::vector<int64_t>{4, 37}));
  EXPECT_NEAR(gumbel_from_uniform(0.5), -std::log(std::log(2.0)), 1e-12);
  EXPECT_NEAR(gumbel_from_uniform(0.5), 0.36651, 1e-5);
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(0.0)));
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(1.0)));
}

TEST(GumbelNoise, MeanIsEulerMascheroni) {
  auto gen = make_generator(17);
  auto g = sample_gumbel_noise({100000}, gen, torch::kFloat64);
  EXPECT_NEAR(g.mean().item<double>(), 0.5772156649, 0.05);
  EXPECT_TRUE(torch::isfinite(g).all().item<bool>());
}

TEST(GumbelNoise, SeededStreamsRepeat) {
  auto a = make_generator(5);
  auto b = make_generator(5);
  EXPECT_TRUE(torch::equal(sample_gumbel_noise({3, 37}, a), sample_gumbel_noise({3, 37}, b)));
  EXPECT_FALSE(torch::equal(sample_gumbel_noise({3, 37}, a), sample_gumbel_noise({3, 37}, a)));
}

TEST(GumbelSoftmax, WorkedExample) {
  auto logits = torch::tensor({1.0, 2.0, 0.5}, torch::kDouble);
  auto noise = torch::tensor({0.3, -0.1, 0.2}, torch::kDouble);
  auto token = gumbel_softmax_st(logits, noise, 1.0);
  EXPECT_TRUE(torch::equal(token.onehot, torch::tensor({0.0, 1.0, 0.0}, torch::kDouble)));
  const double e0 = std::exp(1.3), e1 = std::exp(1.9), e2 = std::exp(0.7);
  const double z = e0 + e1 + e2;
  EXPECT_NEAR(token.soft[0].item<double>(), e0 / z, 1e-6);
  EXPECT_NEAR(token.soft[1].item<double>(), e1 / z, 1e-6);
  EXPECT_NEAR(token.soft[2].item<double>(), e2 / z, 1e-6);
}

TEST(GumbelSoftmax, ZeroNoiseKeepsLogitArgmax) {
  torch::manual_seed(3);
  for (double tau : {0.1, 0.5, 1.0, 4.0}) {
    auto logits = torch::randn({16, 37});
    auto token = gumbel_softmax_st(logits, torch::zeros_like(logits), tau);
    EXPECT_TRUE(torch::equal(token.onehot.argmax(-1), logits.argmax(-1)));
  }
}

TEST(GumbelSoftmax, RejectsBadArguments) {
  auto logits = torch::zeros({2, 37});
  EXPECT_THROW(gumbel_softmax_st(logits, logits, 0.0), DomainError);
  EXPECT_THROW(gumbel_softmax_st(logits, logits, -1.0), DomainError);
  EXPECT_THROW(gumbel_softmax_st(logits, torch::zeros({2, 36}), 1.0), ShapeError);
}

TEST(GumbelSoftmax, ForwardTokensAreExactOneHots) {
  auto gen = make_generator(9);
  torch::manual_seed(9);
  auto logits = torch::randn({8, 25, 37});
  auto token = gumbel_softmax_st(logits, sample_gumbel_noise(logits.sizes(), gen), 0.7);
  EXPECT_TRUE(is_exact_onehot(token.onehot));
  EXPECT_TRUE(torch::equal(token.onehot.argmax(-1), token.soft.argmax(-1)));
}

TEST(GumbelSoftmax, StraightThroughMatchesSoftPathDifferences) {
  torch::manual_seed(21);
  auto gen = make_generator(21);
  auto logits = torch::randn({3, 37}, torch::kDouble).requires_grad_(true);
  auto noise = sample_gumbel_noise({3, 37}, gen, torch::kFloat64);
  auto table = torch::randn({37, 5}, torch::kDouble);
  auto readout = torch::randn({3, 5}, torch::kDouble);
  const double tau = 0.8;
  // Downstream scalar: embed the token, dot with a fixed readout.
  auto downstream = [&](const torch::Tensor& tokens) {
    return (torch::matmul(tokens, table) * readout).sum();
  };
  downstream(gumbel_softmax_st(logits, noise, tau).onehot).backward();
  auto x = logits.detach().clone();
  auto numeric = numeric_gradient(
      [&] { return downstream(torch::softmax((x + noise) / tau, -1)).item<double>(); }, x);
  EXPECT_LT(relative_error(logits.grad(), numeric), 1e-4);
  EXPECT_GT(logits.grad().norm().item<double>(), 0.0);
}

TEST(GumbelSoftmax, EntropyNonDecreasingInTemperature) {
  torch::manual_seed(4);
  auto gen = make_generator(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = torch::randn({37}, torch::kDouble) * 3;
    auto noise = sample_gumbel_noise({37}, gen, torch::kFloat64);
    double previous = -1.0;
    for (double tau : {0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 20.0}) {
      auto p = gumbel_softmax_st(logits, noise, tau).soft;
      const double entropy = -(p * torch::log(p.clamp_min(1e-300))).sum().item<double>();
      EXPECT_GE(entropy, previous - 1e-9);
      previous = entropy;
    }
  }
}

TEST(HardArgmax, DominantLogitAndLowestTie) {
  auto logits = torch::zeros({37});
  logits[2] = 5.0;
  EXPECT_EQ(hard_argmax(logits).onehot.argmax().item<int64_t>(), 2);
  auto tied = torch::tensor({{0.0, 3.0, 3.0, 1.0}, {2.0, 2.0, 2.0, 2.0}});
  auto onehot = hard_argmax(tied).onehot;
  EXPECT_TRUE(torch::equal(onehot, torch::tensor({{0.0, 1.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}})));
  EXPECT_TRUE(torch::equal(argmax_lowest(tied), torch::tensor({1, 0}, torch::kInt64)));
}

TEST(HardArgmax, CarriesNoGradient) {
  auto logits = torch::randn({4, 37}).requires_grad_(true);
  auto token = hard_argmax(logits);
  EXPECT_FALSE(token.onehot.requires_grad());
  EXPECT_FALSE(token.soft.defined());
  EXPECT_TRUE(is_exact_onehot(token.onehot));
}

TEST(Embedding, SelectsRowsAndAverages) {
  CharEmbedding embedding(37, 128);
  auto onehot = torch::zeros({1, 37});
  onehot[0][11] = 1.0;
  auto row = embedding->embed_onehot(onehot);
  EXPECT_EQ(row.sizes(), (std::vector<int64_t>{1, 128}));
  EXPECT_TRUE(torch::allclose(row[0], embedding->weight[11]));
  auto uniform = torch::full({1, 37}, 1.0 / 37);
  EXPECT_TRUE(torch::allclose(embedding->embed_onehot(uniform)[0], embedding->weight.mean(0),
                              1e-5, 1e-6));
  auto by_index = embedding->embed_index(torch::tensor({11, 0}, torch::kInt64));
  EXPECT_TRUE(torch::allclose(by_index[0], row[0]));
}

TEST(Embedding, IndexErrors) {
  CharEmbedding embedding(37, 4);
  EXPECT_THROW(embedding->embed_index(torch::tensor({37}, torch::kInt64)), IndexError);
  EXPECT_THROW(embedding->embed_index(torch::tensor({-1}, torch::kInt64)), IndexError);
  EXPECT_THROW(embedding->embed_onehot(torch::zeros({1, 36})), ShapeError);
}

}  // namespace
}  // namespace mstr
