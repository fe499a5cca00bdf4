#pragma once

#include <cstdint>
#include <random>

#include <torch/torch.h>

#include "mstr/dims.hpp"

namespace mstr {

/// softmax(Q K^T / sqrt(d_k)) V over the last two axes. When `weights` is
/// non-null it receives the post-softmax attention matrix.
torch::Tensor single_head_attention(const torch::Tensor& q, const torch::Tensor& k,
                                    const torch::Tensor& v, double d_k,
                                    torch::Tensor* weights = nullptr);

/// concat(SHA_1..SHA_h) W^O with per-head projections W^Q_i, W^K_i, W^V_i
/// stored as one (width x width) matrix each.
class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadAttentionImpl(int64_t width, int64_t num_heads);
  torch::Tensor forward(const torch::Tensor& x);
  /// Attention weights of the most recent forward: N x heads x T x T.
  const torch::Tensor& last_weights() const { return last_weights_; }

  int64_t head_dim() const { return width_ / num_heads_; }

  torch::nn::Linear w_q{nullptr}, w_k{nullptr}, w_v{nullptr}, w_o{nullptr};

 private:
  int64_t width_;
  int64_t num_heads_;
  torch::Tensor last_weights_;
};
TORCH_MODULE(MultiHeadAttention);

/// max(0, x W_1 + b_1) W_2 + b_2
class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(int64_t width, int64_t inner_width);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(FeedForward);

/// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
class EncoderLayerImpl : public torch::nn::Module {
 public:
  EncoderLayerImpl(int64_t width, int64_t num_heads, int64_t inner_width);
  torch::Tensor forward(const torch::Tensor& x);

  MultiHeadAttention attention{nullptr};
  FeedForward ffn{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(EncoderLayer);

/// Sinusoidal position table: rows = positions, columns = width.
torch::Tensor sinusoidal_positions(int64_t length, int64_t width);

/// Reasoning transformer: positional encoding, then stacked encoder layers.
class ReasoningEncoderImpl : public torch::nn::Module {
 public:
  ReasoningEncoderImpl(int64_t width, int64_t num_heads, int64_t inner_width, int64_t num_layers,
                       int64_t max_len);
  /// x: N x T x width with T <= max_len.
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList layers{nullptr};
  bool use_positions = true;

 private:
  int64_t width_;
  torch::Tensor positions_;
};
TORCH_MODULE(ReasoningEncoder);

ReasoningEncoder make_reasoning_encoder(const ModelDims& dims);

inline constexpr int kMaskToken = 37;            // extra symbol used only in pretraining
inline constexpr int kPretrainVocab = 38;

struct MaskSplit {
  double mask = 0.8;
  double replace = 0.1;  // remainder keeps the original token
};

struct MaskedBatch {
  torch::Tensor input_tokens;   // N x 25, values in [0, 38)
  torch::Tensor target_tokens;  // N x 25, values in [0, 37)
  torch::Tensor predict_mask;   // N x 25 bool
};

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
double unit_uniform(std::mt19937_64& rng);

/// BERT-style corruption. Rows are scanned in order; each position before the
/// row's true length (characters plus the first end-token) draws u; if
/// u < rate it is selected and a second draw r picks mask (r < split.mask),
/// replace (r < split.mask + split.replace; the new token is
/// (orig + 1 + rng() % 36) % 37) or keep. Throws DomainError for rate
/// outside [0, 1].
MaskedBatch corrupt_for_pretraining(const torch::Tensor& tokens, double rate, std::mt19937_64& rng,
                                    const MaskSplit& split = {});

/// Pretraining topology for the semantic reasoner: 38-row embedding table,
/// linear lift to the reasoning width, reasoning encoder and a 37-way head.
class MaskedLanguageModelImpl : public torch::nn::Module {
 public:
  explicit MaskedLanguageModelImpl(const ModelDims& dims);

  /// Per-position logits N x 25 x 37.
  torch::Tensor predict_masked(const MaskedBatch& batch);
  /// Cross-entropy averaged over predict_mask positions; 0 when none are set.
  static torch::Tensor masked_loss(const torch::Tensor& logits, const MaskedBatch& batch);

  torch::Tensor table;  // 38 x embed_dim
  torch::nn::Linear lift{nullptr};
  ReasoningEncoder encoder{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(MaskedLanguageModel);

}  // namespace mstr
