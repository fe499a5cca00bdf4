#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace mstr {

struct AdadeltaOptions {
  double lr = 1.0;
  double rho = 0.9;
  double eps = 1e-6;
  double weight_decay = 0.0;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

/// ADADELTA:
///   E[g^2] <- rho E[g^2] + (1 - rho) g^2
///   dx      = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
///   x      <- x + lr * dx
class Adadelta {
 public:
  Adadelta(std::vector<torch::Tensor> params, AdadeltaOptions options = {});

  void zero_grad();
  /// Returns the gradient norm before clipping.
  double step();

  const AdadeltaOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

  void save(torch::serialize::OutputArchive& archive) const;
  void load(torch::serialize::InputArchive& archive);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> square_avg_;
  std::vector<torch::Tensor> delta_avg_;
  AdadeltaOptions options_;
};

}  // namespace mstr
