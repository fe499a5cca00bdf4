#include "mstr/gumbel.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <cmath>

#include "mstr/errors.hpp"

namespace mstr {
namespace {

// Forward: exact one-hot of the argmax. Backward: identity onto the input.
struct StraightThrough : torch::autograd::Function<StraightThrough> {
  static torch::Tensor forward(torch::autograd::AutogradContext*, const torch::Tensor& soft) {
    auto index = argmax_lowest(soft);
    return torch::zeros_like(soft).scatter_(-1, index.unsqueeze(-1), 1.0);
  }
  static torch::autograd::variable_list backward(torch::autograd::AutogradContext*,
                                                 torch::autograd::variable_list grads) {
    return {grads[0]};
  }
};

}  // namespace

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelEps, 1.0 - kGumbelEps);
  return -std::log(-std::log(u));
}

torch::Tensor sample_gumbel_noise(at::IntArrayRef shape, at::Generator& gen, torch::Dtype dtype) {
  // Draw in double so the clamp at 1e-10 is representable.
  auto u = at::rand(shape, gen, torch::TensorOptions().dtype(torch::kFloat64));
  u = u.clamp(kGumbelEps, 1.0 - kGumbelEps);
  return (-torch::log(-torch::log(u))).to(dtype);
}

torch::Tensor argmax_lowest(const torch::Tensor& values) {
  auto is_max = values == values.amax(-1, /*keepdim=*/true);
  const auto classes = values.size(-1);
  auto positions = torch::arange(classes, values.options().dtype(torch::kInt64));
  auto candidates = torch::where(is_max, positions, torch::full_like(positions, classes));
  return std::get<0>(candidates.min(-1));
}

OneHotToken gumbel_softmax_st(const torch::Tensor& logits, const torch::Tensor& noise, double tau) {
  if (!(tau > 0.0)) throw DomainError("Gumbel-Softmax temperature must be positive");
  if (!noise.sizes().equals(logits.sizes())) {
    throw ShapeError("Gumbel noise shape does not match logits");
  }
  auto soft = torch::softmax((logits + noise) / tau, -1);
  return {StraightThrough::apply(soft), soft};
}

OneHotToken hard_argmax(const torch::Tensor& logits) {
  torch::NoGradGuard no_grad;
  auto detached = logits.detach();
  auto index = argmax_lowest(detached);
  return {torch::zeros_like(detached).scatter_(-1, index.unsqueeze(-1), 1.0), {}};
}

CharEmbeddingImpl::CharEmbeddingImpl(int64_t num_classes, int64_t embed_dim)
    : num_classes_(num_classes) {
  weight = register_parameter("weight", torch::randn({num_classes, embed_dim}) * 0.1);
}

torch::Tensor CharEmbeddingImpl::embed_onehot(const torch::Tensor& onehot) {
  if (onehot.size(-1) != num_classes_) {
    throw ShapeError("embedding input must have " + std::to_string(num_classes_) + " columns");
  }
  return torch::matmul(onehot, weight);
}

torch::Tensor CharEmbeddingImpl::embed_index(const torch::Tensor& indices) {
  if (indices.numel() > 0 &&
      (indices.min().item<int64_t>() < 0 || indices.max().item<int64_t>() >= num_classes_)) {
    throw IndexError("embedding index out of range");
  }
  return torch::embedding(weight, indices);
}

}  // namespace mstr
