#include <gtest/gtest.h>

#include "mstr/backbone.hpp"
#include "mstr/errors.hpp"
#include "test_util.hpp"

namespace mstr {
namespace {

TEST(Backbone, PyramidShapesAtPublishedWidths) {
  torch::manual_seed(0);
  Backbone backbone(ModelDims{});
  backbone->eval();
  torch::NoGradGuard no_grad;
  auto pyramid = backbone->extract_pyramid(torch::rand({2, 3, 32, 100}));
  EXPECT_EQ(pyramid.b_L.sizes(), (std::vector<int64_t>{2, 256, 4, 25}));
  EXPECT_EQ(pyramid.b_Lm1.sizes(), (std::vector<int64_t>{2, 256, 8, 25}));
  EXPECT_EQ(pyramid.b_Lm2.sizes(), (std::vector<int64_t>{2, 256, 16, 50}));
  auto holistic = backbone->encode_holistic(pyramid);
  EXPECT_EQ(holistic.sizes(), (std::vector<int64_t>{2, 512}));
  EXPECT_EQ(backbone->init_decoder_state(holistic).sizes(), (std::vector<int64_t>{2, 256}));
}

TEST(Backbone, ScaledChannelsKeepPyramidInterface) {
  ModelDims dims = tiny_dims();
  dims.feature_dim = 256;
  Backbone backbone(dims);
  torch::NoGradGuard no_grad;
  auto pyramid = backbone->extract_pyramid(torch::rand({1, 3, 32, 100}));
  EXPECT_EQ(pyramid.b_L.sizes(), (std::vector<int64_t>{1, 256, 4, 25}));
  EXPECT_EQ(pyramid.b_Lm2.sizes(), (std::vector<int64_t>{1, 256, 16, 50}));
  EXPECT_EQ(&pyramid.level(0), &pyramid.b_L);
  EXPECT_EQ(&pyramid.level(1), &pyramid.b_Lm1);
  EXPECT_EQ(&pyramid.level(2), &pyramid.b_Lm2);
  EXPECT_THROW(pyramid.level(3), ConfigError);
}

TEST(Backbone, RejectsWrongInputShape) {
  Backbone backbone(tiny_dims());
  EXPECT_THROW(backbone->extract_pyramid(torch::rand({1, 3, 32, 64})), ShapeError);
  EXPECT_THROW(backbone->extract_pyramid(torch::rand({1, 1, 32, 100})), ShapeError);
  EXPECT_THROW(backbone->extract_pyramid(torch::rand({3, 32, 100})), ShapeError);
}

TEST(Backbone, DeterministicInEvalMode) {
  Backbone backbone(tiny_dims());
  backbone->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::rand({2, 3, 32, 100});
  auto a = backbone->extract_pyramid(x);
  auto b = backbone->extract_pyramid(x);
  EXPECT_TRUE(torch::equal(a.b_L, b.b_L));
  EXPECT_TRUE(torch::equal(a.b_Lm2, b.b_Lm2));
}

TEST(ColumnMaxPool, ConstantOverHeightEqualsAnyRow) {
  auto row = torch::randn({2, 5, 1, 7});
  auto map = row.expand({2, 5, 4, 7}).contiguous();
  auto pooled = column_max_pool(map);
  EXPECT_EQ(pooled.sizes(), (std::vector<int64_t>{2, 7, 5}));
  EXPECT_TRUE(torch::allclose(pooled, row.squeeze(2).transpose(1, 2)));
}

TEST(ColumnMaxPool, MatchesNaiveLoop) {
  auto map = torch::randn({2, 3, 4, 6}, torch::kDouble);
  // Make one row dominant per column.
  for (int64_t x = 0; x < 6; ++x) map.select(3, x).select(2, x % 4) += 10.0;
  auto pooled = column_max_pool(map);
  auto a = map.accessor<double, 4>();
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t x = 0; x < 6; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        double best = a[n][c][0][x];
        for (int64_t y = 1; y < 4; ++y) best = std::max(best, a[n][c][y][x]);
        EXPECT_DOUBLE_EQ(pooled[n][x][c].item<double>(), best);
        EXPECT_DOUBLE_EQ(best, a[n][c][x % 4][x]);
      }
    }
  }
}

TEST(InitDecoderState, ZeroInputGivesTanhBias) {
  Backbone backbone(tiny_dims());
  auto params = backbone->named_parameters();
  auto bias = params["init_proj.bias"];
  auto out = backbone->init_decoder_state(torch::zeros({3, 16}));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{3, 8}));
  EXPECT_TRUE(torch::allclose(out, torch::tanh(bias).expand({3, 8})));
}

TEST(InitDecoderState, BoundedForLargeInput) {
  Backbone backbone(tiny_dims());
  auto out = backbone->init_decoder_state(torch::randn({4, 16}) * 1e3);
  EXPECT_LE(out.abs().max().item<float>(), 1.0f);
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
}

TEST(Backbone, GradientCheckDoublePrecision) {
  torch::manual_seed(3);
  Backbone backbone(tiny_dims());
  backbone->to(torch::kDouble);
  backbone->eval();
  auto x = torch::rand({1, 3, 32, 100}, torch::kDouble).requires_grad_(true);
  auto w_l = torch::randn({1, 8, 4, 25}, torch::kDouble);
  auto w_m = torch::randn({1, 8, 8, 25}, torch::kDouble);
  auto w_s = torch::randn({1, 8, 16, 50}, torch::kDouble);
  auto w_h = torch::randn({1, 8}, torch::kDouble);
  auto objective = [&](const torch::Tensor& input) {
    auto p = backbone->extract_pyramid(input);
    auto h = backbone->init_decoder_state(backbone->encode_holistic(p));
    return (p.b_L * w_l).sum() + (p.b_Lm1 * w_m).sum() + (p.b_Lm2 * w_s).sum() + (h * w_h).sum();
  };
  objective(x).backward();
  auto analytic = x.grad().clone();
  auto input = x.detach().clone();
  auto [a, n] = sampled_gradients([&] { return objective(input).item<double>(); }, input,
                                  analytic, 60, 11);
  EXPECT_LT(relative_error(a, n), 1e-4);

  auto weight = backbone->named_parameters()["stem.0.weight"];
  backbone->zero_grad();
  objective(input).backward();
  auto wgrad = weight.grad().clone();
  auto [wa, wn] = sampled_gradients([&] { return objective(input).item<double>(); }, weight,
                                    wgrad, 30, 12);
  EXPECT_LT(relative_error(wa, wn), 1e-4);
}

}  // namespace
}  // namespace mstr
