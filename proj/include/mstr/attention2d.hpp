#pragma once

#include <vector>

#include <torch/torch.h>

namespace mstr {

struct GlimpseResult {
  torch::Tensor glimpse;   // N x D
  torch::Tensor attn_map;  // N x H x W, each map sums to 1
};

/// Neighborhood-aware 2D attention:
///   J = tanh(conv3x3(B) + W_H q),  alpha = softmax_{i,j}(w_attn . J_ij),
///   g = sum_{i,j} alpha_ij B_ij.
class Attention2dImpl : public torch::nn::Module {
 public:
  Attention2dImpl(int64_t feature_dim, int64_t query_dim, int64_t attn_dim);

  /// conv3x3(B) does not depend on the query; decoders compute it once per unroll.
  torch::Tensor project_features(const torch::Tensor& feature_map);

  GlimpseResult attend_projected(const torch::Tensor& feature_map,
                                 const torch::Tensor& projected, const torch::Tensor& query);

  GlimpseResult attend(const torch::Tensor& feature_map, const torch::Tensor& query);

  int64_t feature_dim() const { return feature_dim_; }
  int64_t query_dim() const { return query_dim_; }

  torch::nn::Conv2d feature_conv{nullptr};  // W_B
  torch::nn::Linear query_proj{nullptr};    // W_H
  torch::nn::Linear scorer{nullptr};        // W_attn

 private:
  int64_t feature_dim_;
  int64_t query_dim_;
};
TORCH_MODULE(Attention2d);

/// Dense cross-stage glimpse fusion: a 1x1 convolution over the concatenated
/// glimpses [g^s, g^{s-1}, ..., g^0] mapping (s+1)*D back to D.
class DenseFuseImpl : public torch::nn::Module {
 public:
  DenseFuseImpl(int64_t num_inputs, int64_t feature_dim);
  torch::Tensor forward(const std::vector<torch::Tensor>& glimpses);

  torch::nn::Linear mix{nullptr};

 private:
  int64_t num_inputs_;
  int64_t feature_dim_;
};
TORCH_MODULE(DenseFuse);

}  // namespace mstr
