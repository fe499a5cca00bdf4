#include "mstr/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "mstr/errors.hpp"
#include "mstr/synth.hpp"

namespace mstr {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

int64_t scaled(int64_t width, double scale) {
  return std::max<int64_t>(4, static_cast<int64_t>(std::lround(width * scale)));
}

std::string shape_string(const torch::Tensor& t) {
  std::string out = "[";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) out += "x";
    out += std::to_string(t.size(i));
  }
  return out + "]";
}

}  // namespace

const torch::Tensor& FeaturePyramid::level(int offset) const {
  switch (offset) {
    case 0: return b_L;
    case 1: return b_Lm1;
    case 2: return b_Lm2;
    default:
      throw ConfigError("feature pyramid has no level L-" + std::to_string(offset));
  }
}

ResidualBlockImpl::ResidualBlockImpl(int64_t in_channels, int64_t out_channels,
                                     torch::ExpandingArray<2> stride) {
  conv1_ = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3)
                              .stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2_ = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out_channels));
  const bool strided = (*stride)[0] != 1 || (*stride)[1] != 1;
  if (strided || in_channels != out_channels) {
    shortcut_ = register_module(
        "shortcut",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1)
                                      .stride(stride).bias(false)),
                       nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_(conv1_(x)));
  out = bn2_(conv2_(out));
  auto identity = shortcut_ ? shortcut_->forward(x) : x;
  return torch::relu(out + identity);
}

BackboneImpl::BackboneImpl(const ModelDims& dims) : dims_(dims) {
  const double s = dims.channels_scale;
  const int64_t c0 = scaled(32, s), c1 = scaled(64, s), c2 = scaled(128, s), c3 = scaled(256, s);
  const int64_t d = dims.feature_dim;

  stem_ = register_module(
      "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(kImageChannels, c0, 3).padding(1).bias(false)),
                             nn::BatchNorm2d(c0), nn::ReLU()));
  layer1_ = register_module("layer1", nn::Sequential(ResidualBlock(c0, c1, torch::ExpandingArray<2>({2, 2})),
                                                     ResidualBlock(c1, c1)));
  layer2_ = register_module("layer2", nn::Sequential(ResidualBlock(c1, c2, torch::ExpandingArray<2>({2, 2})),
                                                     ResidualBlock(c2, c2)));
  layer3_ = register_module("layer3", nn::Sequential(ResidualBlock(c2, c3, torch::ExpandingArray<2>({2, 1})),
                                                     ResidualBlock(c3, c3)));

  lateral_L_ = register_module("lateral_L", nn::Conv2d(nn::Conv2dOptions(c3, d, 1)));
  lateral_Lm1_ = register_module("lateral_Lm1", nn::Conv2d(nn::Conv2dOptions(c2, d, 1)));
  lateral_Lm2_ = register_module("lateral_Lm2", nn::Conv2d(nn::Conv2dOptions(c1, d, 1)));
  smooth_L_ = register_module("smooth_L", nn::Conv2d(nn::Conv2dOptions(d, d, 3).padding(1)));
  smooth_Lm1_ = register_module("smooth_Lm1", nn::Conv2d(nn::Conv2dOptions(d, d, 3).padding(1)));
  smooth_Lm2_ = register_module("smooth_Lm2", nn::Conv2d(nn::Conv2dOptions(d, d, 3).padding(1)));

  holistic_rnn_ = register_module(
      "holistic_rnn", nn::LSTM(nn::LSTMOptions(d, dims.hidden_dim)
                                   .num_layers(2).bidirectional(true).batch_first(true)));
  init_proj_ = register_module("init_proj", nn::Linear(2 * dims.hidden_dim, dims.hidden_dim));
}

FeaturePyramid BackboneImpl::extract_pyramid(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != kImageChannels || images.size(2) != kImageHeight ||
      images.size(3) != kImageWidth) {
    throw ShapeError("backbone expects N x 3 x 32 x 100 images, got " + shape_string(images));
  }
  auto x = stem_->forward(images);
  auto c_Lm2 = layer1_->forward(x);
  auto c_Lm1 = layer2_->forward(c_Lm2);
  auto c_L = layer3_->forward(c_Lm1);

  auto nearest = [](const torch::Tensor& t, const torch::Tensor& like) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kNearest));
  };
  auto p_L = lateral_L_(c_L);
  auto p_Lm1 = lateral_Lm1_(c_Lm1) + nearest(p_L, c_Lm1);
  auto p_Lm2 = lateral_Lm2_(c_Lm2) + nearest(p_Lm1, c_Lm2);
  return {smooth_L_(p_L), smooth_Lm1_(p_Lm1), smooth_Lm2_(p_Lm2)};
}

torch::Tensor column_max_pool(const torch::Tensor& feature_map) {
  return std::get<0>(feature_map.max(2)).transpose(1, 2);
}

torch::Tensor BackboneImpl::encode_holistic(const FeaturePyramid& pyramid) {
  auto sequence = column_max_pool(pyramid.b_L).contiguous();
  auto [output, state] = holistic_rnn_->forward(sequence);
  const auto& h_n = std::get<0>(state);  // (layers*2) x N x hidden
  const auto layers = h_n.size(0);
  return torch::cat({h_n[layers - 2], h_n[layers - 1]}, 1);
}

torch::Tensor BackboneImpl::init_decoder_state(const torch::Tensor& holistic) {
  return torch::tanh(init_proj_(holistic));
}

}  // namespace mstr
