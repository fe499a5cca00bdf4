#include "mstr/adadelta.hpp"

#include <cmath>

namespace mstr {

Adadelta::Adadelta(std::vector<torch::Tensor> params, AdadeltaOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    square_avg_.push_back(torch::zeros_like(p));
    delta_avg_.push_back(torch::zeros_like(p));
  }
}

void Adadelta::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

double Adadelta::step() {
  torch::NoGradGuard no_grad;
  double norm_sq = 0.0;
  for (const auto& p : params_) {
    if (p.grad().defined()) norm_sq += p.grad().pow(2).sum().item<double>();
  }
  const double norm = std::sqrt(norm_sq);
  const double scale =
      options_.clip_norm > 0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;
  const double rho = options_.rho, eps = options_.eps;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    auto grad = p.grad() * scale;
    if (options_.weight_decay != 0.0) grad = grad + options_.weight_decay * p;
    square_avg_[i].mul_(rho).addcmul_(grad, grad, 1.0 - rho);
    auto delta = (delta_avg_[i] + eps).sqrt_().div_((square_avg_[i] + eps).sqrt_()).mul_(grad);
    delta_avg_[i].mul_(rho).addcmul_(delta, delta, 1.0 - rho);
    p.add_(delta, -options_.lr);
  }
  return norm;
}

void Adadelta::save(torch::serialize::OutputArchive& archive) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    archive.write("square_avg." + std::to_string(i), square_avg_[i], /*is_buffer=*/true);
    archive.write("delta_avg." + std::to_string(i), delta_avg_[i], /*is_buffer=*/true);
  }
}

void Adadelta::load(torch::serialize::InputArchive& archive) {
  for (size_t i = 0; i < params_.size(); ++i) {
    archive.read("square_avg." + std::to_string(i), square_avg_[i], /*is_buffer=*/true);
    archive.read("delta_avg." + std::to_string(i), delta_avg_[i], /*is_buffer=*/true);
  }
}

}  // namespace mstr
