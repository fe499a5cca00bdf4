#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "mstr/decoder.hpp"

namespace mstr {

struct LossWeights {
  double cls = 1.0;       // lambda_1
  double visual = 0.1;    // lambda_2
  double semantic = 0.1;  // lambda_3
};

struct LossBreakdown {
  torch::Tensor l_c;
  torch::Tensor l_v;
  torch::Tensor l_s;
  torch::Tensor total;
  std::vector<torch::Tensor> per_stage;  // unweighted L_C term of each stage
};

/// Cross-entropy of N x T x C logits against N x T targets, averaged over the
/// positions where mask is true.
torch::Tensor masked_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets,
                                   const torch::Tensor& mask);

struct StageLoss {
  torch::Tensor l_c;
  std::vector<torch::Tensor> per_stage;
};

/// Sum over stages of masked cross-entropy. `stage_weights`, when non-empty,
/// scales each stage's term (e.g. {0, 0, 1} for a last-stage-only loss).
StageLoss stage_cross_entropy(const std::vector<StageOutput>& outputs, const Targets& targets,
                              const std::vector<double>& stage_weights = {});

/// Auxiliary losses through the visual and semantic heads, summed over
/// refinement stages. Both are zero when no stage carries joint features.
std::pair<torch::Tensor, torch::Tensor> auxiliary_losses(const std::vector<StageOutput>& outputs,
                                                         const Targets& targets,
                                                         torch::nn::Linear& visual_head,
                                                         torch::nn::Linear& semantic_head);

/// total = cls * l_c + visual * l_v + semantic * l_s. Throws DomainError for
/// negative weights.
LossBreakdown total_loss(const torch::Tensor& l_c, const torch::Tensor& l_v,
                         const torch::Tensor& l_s, const LossWeights& weights = {});

/// Fraction of exact case-insensitive matches. Throws LengthError on size mismatch.
double word_recognition_accuracy(const std::vector<std::string>& predictions,
                                 const std::vector<std::string>& truths);

/// Levenshtein distance (unit insert, delete, substitute).
int char_edit_distance(std::string_view a, std::string_view b);

}  // namespace mstr
