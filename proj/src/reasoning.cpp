#include "mstr/reasoning.hpp"

#include <cmath>

#include "mstr/errors.hpp"
#include "mstr/vocab.hpp"

namespace mstr {
namespace nn = torch::nn;

torch::Tensor single_head_attention(const torch::Tensor& q, const torch::Tensor& k,
                                    const torch::Tensor& v, double d_k, torch::Tensor* weights) {
  if (q.size(-1) != k.size(-1) || k.size(-2) != v.size(-2)) {
    throw ShapeError("attention operands disagree on inner dimensions");
  }
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(d_k);
  auto attn = torch::softmax(scores, -1);
  if (weights) *weights = attn;
  return torch::matmul(attn, v);
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t width, int64_t num_heads)
    : width_(width), num_heads_(num_heads) {
  if (num_heads <= 0 || width % num_heads != 0) {
    throw ShapeError("head count " + std::to_string(num_heads) + " does not divide width " +
                     std::to_string(width));
  }
  auto linear = [&](const char* name) {
    return register_module(name, nn::Linear(nn::LinearOptions(width, width).bias(false)));
  };
  w_q = linear("w_q");
  w_k = linear("w_k");
  w_v = linear("w_v");
  w_o = linear("w_o");
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 3 || x.size(2) != width_) {
    throw ShapeError("multi-head attention expects N x T x " + std::to_string(width_));
  }
  const auto n = x.size(0), t = x.size(1), dh = head_dim();
  auto split = [&](const torch::Tensor& y) {
    return y.reshape({n, t, num_heads_, dh}).transpose(1, 2);  // N x h x T x dh
  };
  auto heads = single_head_attention(split(w_q(x)), split(w_k(x)), split(w_v(x)),
                                     static_cast<double>(dh), &last_weights_);
  return w_o(heads.transpose(1, 2).reshape({n, t, width_}));
}

FeedForwardImpl::FeedForwardImpl(int64_t width, int64_t inner_width) {
  fc1 = register_module("fc1", nn::Linear(width, inner_width));
  fc2 = register_module("fc2", nn::Linear(inner_width, width));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
  return fc2(torch::relu(fc1(x)));
}

EncoderLayerImpl::EncoderLayerImpl(int64_t width, int64_t num_heads, int64_t inner_width) {
  attention = register_module("attention", MultiHeadAttention(width, num_heads));
  ffn = register_module("ffn", FeedForward(width, inner_width));
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({width})));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({width})));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x) {
  auto y = norm1(x + attention(x));
  return norm2(y + ffn(y));
}

torch::Tensor sinusoidal_positions(int64_t length, int64_t width) {
  auto table = torch::zeros({length, width});
  auto acc = table.accessor<float, 2>();
  for (int64_t pos = 0; pos < length; ++pos) {
    for (int64_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      acc[pos][i] = static_cast<float>(i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
    }
  }
  return table;
}

ReasoningEncoderImpl::ReasoningEncoderImpl(int64_t width, int64_t num_heads, int64_t inner_width,
                                           int64_t num_layers, int64_t max_len)
    : width_(width) {
  layers = register_module("layers", nn::ModuleList());
  for (int64_t i = 0; i < num_layers; ++i) {
    layers->push_back(EncoderLayer(width, num_heads, inner_width));
  }
  positions_ = register_buffer("positions", sinusoidal_positions(max_len, width));
}

torch::Tensor ReasoningEncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 3 || x.size(2) != width_ || x.size(1) > positions_.size(0)) {
    throw ShapeError("reasoning encoder expects N x T x " + std::to_string(width_) +
                     " with T <= " + std::to_string(positions_.size(0)));
  }
  auto y = use_positions ? x + positions_.slice(0, 0, x.size(1)).to(x.dtype()) : x;
  for (const auto& layer : *layers) y = layer->as<EncoderLayer>()->forward(y);
  return y;
}

ReasoningEncoder make_reasoning_encoder(const ModelDims& dims) {
  return ReasoningEncoder(dims.hidden_dim, dims.num_heads, dims.ffn_dim, dims.reasoning_layers,
                          kMaxLen);
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

MaskedBatch corrupt_for_pretraining(const torch::Tensor& tokens, double rate, std::mt19937_64& rng,
                                    const MaskSplit& split) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("mask rate must lie in [0, 1]");
  if (tokens.dim() != 2) throw ShapeError("token batch must be N x T");
  auto targets = tokens.to(torch::kInt64).contiguous();
  auto inputs = targets.clone();
  auto predict = torch::zeros(targets.sizes(), torch::kBool);
  auto in = inputs.accessor<int64_t, 2>();
  auto tgt = targets.accessor<int64_t, 2>();
  auto pm = predict.accessor<bool, 2>();
  const int64_t eos = kNumClasses - 1;
  for (int64_t n = 0; n < targets.size(0); ++n) {
    int64_t length = targets.size(1);
    for (int64_t t = 0; t < targets.size(1); ++t) {
      if (tgt[n][t] == eos) {
        length = t + 1;
        break;
      }
    }
    for (int64_t t = 0; t < length; ++t) {
      if (unit_uniform(rng) >= rate) continue;
      pm[n][t] = true;
      const double r = unit_uniform(rng);
      if (r < split.mask) {
        in[n][t] = kMaskToken;
      } else if (r < split.mask + split.replace) {
        in[n][t] = (tgt[n][t] + 1 + static_cast<int64_t>(rng() % (kNumClasses - 1))) % kNumClasses;
      }
    }
  }
  return {inputs, targets, predict};
}

MaskedLanguageModelImpl::MaskedLanguageModelImpl(const ModelDims& dims) {
  table = register_parameter("table", torch::randn({kPretrainVocab, dims.embed_dim}) * 0.1);
  lift = register_module("lift", nn::Linear(dims.embed_dim, dims.hidden_dim));
  encoder = register_module("encoder", make_reasoning_encoder(dims));
  head = register_module("head", nn::Linear(dims.hidden_dim, kNumClasses));
}

torch::Tensor MaskedLanguageModelImpl::predict_masked(const MaskedBatch& batch) {
  auto embedded = torch::embedding(table, batch.input_tokens);
  return head(encoder(lift(embedded)));
}

torch::Tensor MaskedLanguageModelImpl::masked_loss(const torch::Tensor& logits,
                                                   const MaskedBatch& batch) {
  auto mask = batch.predict_mask.to(logits.dtype());
  auto count = mask.sum();
  if (count.item<double>() == 0.0) return logits.sum() * 0.0;
  auto nll = -torch::log_softmax(logits, -1)
                  .gather(-1, batch.target_tokens.unsqueeze(-1))
                  .squeeze(-1);
  return (nll * mask).sum() / count;
}

}  // namespace mstr
