#include "mstr/attention2d.hpp"

#include "mstr/errors.hpp"

namespace mstr {
namespace nn = torch::nn;

Attention2dImpl::Attention2dImpl(int64_t feature_dim, int64_t query_dim, int64_t attn_dim)
    : feature_dim_(feature_dim), query_dim_(query_dim) {
  feature_conv = register_module(
      "feature_conv", nn::Conv2d(nn::Conv2dOptions(feature_dim, attn_dim, 3).padding(1)));
  query_proj = register_module("query_proj",
                               nn::Linear(nn::LinearOptions(query_dim, attn_dim).bias(false)));
  scorer = register_module("scorer", nn::Linear(nn::LinearOptions(attn_dim, 1).bias(false)));
}

torch::Tensor Attention2dImpl::project_features(const torch::Tensor& feature_map) {
  if (feature_map.dim() != 4 || feature_map.size(1) != feature_dim_) {
    throw ShapeError("attention expects N x " + std::to_string(feature_dim_) +
                     " x H x W feature maps");
  }
  return feature_conv(feature_map);
}

GlimpseResult Attention2dImpl::attend_projected(const torch::Tensor& feature_map,
                                                const torch::Tensor& projected,
                                                const torch::Tensor& query) {
  if (query.dim() != 2 || query.size(1) != query_dim_ || query.size(0) != feature_map.size(0)) {
    throw ShapeError("attention query must be N x " + std::to_string(query_dim_));
  }
  const auto n = feature_map.size(0), h = feature_map.size(2), w = feature_map.size(3);
  auto q = query_proj(query).unsqueeze(-1).unsqueeze(-1);          // N x A x 1 x 1
  auto energy = torch::tanh(projected + q).permute({0, 2, 3, 1});  // N x H x W x A
  auto scores = scorer(energy).reshape({n, h * w});
  auto alpha = torch::softmax(scores, 1);
  auto glimpse = torch::bmm(feature_map.reshape({n, feature_dim_, h * w}), alpha.unsqueeze(-1))
                     .squeeze(-1);
  return {glimpse, alpha.reshape({n, h, w})};
}

GlimpseResult Attention2dImpl::attend(const torch::Tensor& feature_map, const torch::Tensor& query) {
  return attend_projected(feature_map, project_features(feature_map), query);
}

DenseFuseImpl::DenseFuseImpl(int64_t num_inputs, int64_t feature_dim)
    : num_inputs_(num_inputs), feature_dim_(feature_dim) {
  mix = register_module("mix", nn::Linear(num_inputs * feature_dim, feature_dim));
}

torch::Tensor DenseFuseImpl::forward(const std::vector<torch::Tensor>& glimpses) {
  if (static_cast<int64_t>(glimpses.size()) != num_inputs_) {
    throw ShapeError("dense fusion expects " + std::to_string(num_inputs_) + " glimpses, got " +
                     std::to_string(glimpses.size()));
  }
  for (const auto& g : glimpses) {
    if (g.dim() != 2 || g.size(0) != glimpses.front().size(0) || g.size(1) != feature_dim_) {
      throw ShapeError("dense fusion glimpses must all be N x " + std::to_string(feature_dim_));
    }
  }
  return mix(torch::cat(glimpses, 1));
}

}  // namespace mstr
