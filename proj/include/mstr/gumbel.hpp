#pragma once

#include <ATen/core/Generator.h>
#include <torch/torch.h>

namespace mstr {

inline constexpr double kGumbelEps = 1e-10;

/// Seeded CPU generator for noise draws.
at::Generator make_generator(uint64_t seed);

/// i.i.d. Gumbel(0, 1): -log(-log(u)), u ~ U(0,1) clamped to [eps, 1 - eps].
torch::Tensor sample_gumbel_noise(at::IntArrayRef shape, at::Generator& gen,
                                  torch::Dtype dtype = torch::kFloat32);

/// Closed form of the Gumbel transform for a given uniform draw.
double gumbel_from_uniform(double u);

struct OneHotToken {
  torch::Tensor onehot;  // exact one-hot rows
  torch::Tensor soft;    // relaxed probabilities (undefined for hard_argmax)
};

/// Rowwise argmax over the last axis; ties resolve to the lowest index.
torch::Tensor argmax_lowest(const torch::Tensor& values);

/// Straight-through Gumbel-Softmax: forward emits one-hot(argmax(soft)) with
/// soft = softmax((logits + noise) / tau); backward routes the gradient of the
/// one-hot to `soft` unchanged. Throws DomainError if tau <= 0, ShapeError if
/// noise does not match logits.
OneHotToken gumbel_softmax_st(const torch::Tensor& logits, const torch::Tensor& noise, double tau);

/// Inference path: one-hot at the rowwise argmax, no gradient.
OneHotToken hard_argmax(const torch::Tensor& logits);

/// Character embedding E(.): one-hot (or soft) rows times a |V| x E matrix.
class CharEmbeddingImpl : public torch::nn::Module {
 public:
  CharEmbeddingImpl(int64_t num_classes, int64_t embed_dim);

  torch::Tensor embed_onehot(const torch::Tensor& onehot);
  /// Integer indices; throws IndexError for out-of-range values.
  torch::Tensor embed_index(const torch::Tensor& indices);

  torch::Tensor weight;

 private:
  int64_t num_classes_;
};
TORCH_MODULE(CharEmbedding);

}  // namespace mstr
