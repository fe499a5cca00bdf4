#include "mstr/objectives.hpp"

#include <algorithm>
#include <numeric>

#include "mstr/errors.hpp"
#include "mstr/vocab.hpp"

namespace mstr {

torch::Tensor masked_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets,
                                   const torch::Tensor& mask) {
  if (logits.dim() != 3 || targets.sizes() != logits.sizes().slice(0, 2) ||
      mask.sizes() != targets.sizes()) {
    throw ShapeError("cross-entropy expects N x T x C logits with N x T targets and mask");
  }
  auto weight = mask.to(logits.dtype());
  auto nll = -torch::log_softmax(logits, -1).gather(-1, targets.unsqueeze(-1)).squeeze(-1);
  return (nll * weight).sum() / weight.sum().clamp_min(1.0);
}

StageLoss stage_cross_entropy(const std::vector<StageOutput>& outputs, const Targets& targets,
                              const std::vector<double>& stage_weights) {
  if (outputs.empty()) throw ShapeError("no stage outputs to score");
  if (!stage_weights.empty() && stage_weights.size() != outputs.size()) {
    throw ShapeError("stage weight count does not match the number of stages");
  }
  StageLoss out;
  for (size_t s = 0; s < outputs.size(); ++s) {
    auto term = masked_cross_entropy(outputs[s].logits, targets.indices, targets.mask);
    out.per_stage.push_back(term);
    const double w = stage_weights.empty() ? 1.0 : stage_weights[s];
    out.l_c = out.l_c.defined() ? out.l_c + w * term : w * term;
  }
  return out;
}

std::pair<torch::Tensor, torch::Tensor> auxiliary_losses(const std::vector<StageOutput>& outputs,
                                                         const Targets& targets,
                                                         torch::nn::Linear& visual_head,
                                                         torch::nn::Linear& semantic_head) {
  torch::Tensor l_v, l_s;
  for (const auto& stage : outputs) {
    if (!stage.joint) continue;
    auto v = masked_cross_entropy(visual_head(stage.joint->visual), targets.indices, targets.mask);
    auto s = masked_cross_entropy(semantic_head(stage.joint->semantic), targets.indices,
                                  targets.mask);
    l_v = l_v.defined() ? l_v + v : v;
    l_s = l_s.defined() ? l_s + s : s;
  }
  if (!l_v.defined()) {
    auto options = outputs.empty() ? torch::TensorOptions() : outputs.front().logits.options();
    l_v = torch::zeros({}, options);
    l_s = torch::zeros({}, options);
  }
  return {l_v, l_s};
}

LossBreakdown total_loss(const torch::Tensor& l_c, const torch::Tensor& l_v,
                         const torch::Tensor& l_s, const LossWeights& weights) {
  if (weights.cls < 0 || weights.visual < 0 || weights.semantic < 0) {
    throw DomainError("loss weights must be non-negative");
  }
  LossBreakdown out;
  out.l_c = l_c;
  out.l_v = l_v;
  out.l_s = l_s;
  out.total = weights.cls * l_c + weights.visual * l_v + weights.semantic * l_s;
  return out;
}

double word_recognition_accuracy(const std::vector<std::string>& predictions,
                                 const std::vector<std::string>& truths) {
  if (predictions.size() != truths.size()) {
    throw LengthError("prediction and truth lists differ in length");
  }
  if (predictions.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    hits += to_lower(predictions[i]) == to_lower(truths[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

int char_edit_distance(std::string_view a, std::string_view b) {
  std::vector<int> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    int diagonal = row[0];
    row[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const int above = row[j];
      row[j] = std::min({above + 1, row[j - 1] + 1, diagonal + (a[i - 1] != b[j - 1] ? 1 : 0)});
      diagonal = above;
    }
  }
  return row[b.size()];
}

}  // namespace mstr
