#pragma once

#include <torch/torch.h>

#include "mstr/dims.hpp"

namespace mstr {

/// Three pyramid levels for a 32x100 input: b_L is the deepest (4x25),
/// b_Lm1 is 8x25 and b_Lm2 is 16x50. All carry `feature_dim` channels.
struct FeaturePyramid {
  torch::Tensor b_L;
  torch::Tensor b_Lm1;
  torch::Tensor b_Lm2;

  /// Level L - offset, offset in {0, 1, 2}. Throws ConfigError otherwise.
  const torch::Tensor& level(int offset) const;
  static constexpr int kNumLevels = 3;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int64_t in_channels, int64_t out_channels,
                    torch::ExpandingArray<2> stride = 1);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Compact residual CNN with an FPN top-down path plus the BiLSTM holistic
/// encoder. Stride schedule: (2,2) -> 16x50, (2,2) -> 8x25, (2,1) -> 4x25.
class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(const ModelDims& dims);

  /// images: N x 3 x 32 x 100. Throws ShapeError on any other shape.
  FeaturePyramid extract_pyramid(const torch::Tensor& images);

  /// Column-wise max over the height of b_L, then a 2-layer BiLSTM; returns the
  /// final-layer forward and backward states concatenated (N x 2*hidden).
  torch::Tensor encode_holistic(const FeaturePyramid& pyramid);

  /// tanh(W_v h + b_v): N x hidden.
  torch::Tensor init_decoder_state(const torch::Tensor& holistic);

  const ModelDims& dims() const { return dims_; }

 private:
  ModelDims dims_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr};
  torch::nn::Conv2d lateral_L_{nullptr}, lateral_Lm1_{nullptr}, lateral_Lm2_{nullptr};
  torch::nn::Conv2d smooth_L_{nullptr}, smooth_Lm1_{nullptr}, smooth_Lm2_{nullptr};
  torch::nn::LSTM holistic_rnn_{nullptr};
  torch::nn::Linear init_proj_{nullptr};
};
TORCH_MODULE(Backbone);

/// Max over the height axis: N x C x H x W -> N x W x C.
torch::Tensor column_max_pool(const torch::Tensor& feature_map);

}  // namespace mstr
