#pragma once

#include <optional>
#include <string>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/torch.h>

#include "mstr/attention2d.hpp"
#include "mstr/backbone.hpp"
#include "mstr/dims.hpp"
#include "mstr/gumbel.hpp"
#include "mstr/reasoning.hpp"

namespace mstr {

/// How stage s-1 predictions reach stage s.
enum class FeedbackMode {
  kGumbelST,     // straight-through Gumbel-Softmax one-hots (default)
  kHardArgmax,   // detached argmax one-hots; no cross-stage token gradient
  kLogits,       // raw logits through a linear lift instead of E(.)
  kGroundTruth,  // teacher forcing into later stages (training only)
};

enum class LaterInit { kZeros, kHolistic };

enum class RunMode { kTrain, kInfer };

std::string to_string(FeedbackMode mode);
FeedbackMode parse_feedback_mode(const std::string& text);
std::string to_string(LaterInit init);
LaterInit parse_later_init(const std::string& text);

struct DecoderConfig {
  int num_stages = 2;  // S; stages 0..S
  int max_len = 25;
  double tau = 1.0;
  bool teacher_forcing = true;  // stage 0 only
  FeedbackMode feedback = FeedbackMode::kGumbelST;
  LaterInit later_init = LaterInit::kZeros;

  /// Throws ConfigError.
  void validate() const;
};

struct JointFeatures {
  torch::Tensor visual;    // N x T x hidden
  torch::Tensor semantic;  // N x T x hidden
  torch::Tensor joint;     // N x T x 2*hidden
};

struct StageOutput {
  int stage = 0;
  torch::Tensor hidden;        // N x T x hidden (raw LSTM trajectory)
  torch::Tensor logits;        // N x T x 37
  torch::Tensor tokens;        // N x T x 37 exact one-hots
  torch::Tensor glimpses;      // fused glimpses for s >= 1, raw for s = 0
  torch::Tensor raw_glimpses;  // N x T x D before fusion
  torch::Tensor attn_maps;     // N x T x H x W
  std::optional<JointFeatures> joint;    // s >= 1
  torch::Tensor residual_hidden;         // LayerNorm(H^S + H^0) at the final stage s >= 1
};

/// Labels for the training path.
struct Targets {
  torch::Tensor indices;  // N x T int64
  torch::Tensor mask;     // N x T bool
};

/// Multi-stage multi-scale attentional recognizer.
///
/// Stage 0 attends b_L with query H_{t-1} and consumes the previous token.
/// Stage s >= 1 waits for stage s-1 to unroll fully, builds
/// mu = [phi(H^{s-1}), omega(lift(E(Y^{s-1})))], attends B_{L-s} with query
/// [mu_t, H_{t-1}], fuses glimpses densely with all earlier stages and feeds
/// [E(y_t^{s-1}), fused glimpse, mu_t] to its LSTM. The final stage adds the
/// LayerNorm residual with H^0 before its classifier.
///
/// E, phi, omega, the semantic lift and the auxiliary heads are single
/// instances shared by every stage; each stage owns its LSTM, attention,
/// classifier and fusion layer.
class RecognizerImpl : public torch::nn::Module {
 public:
  RecognizerImpl(const ModelDims& dims, const DecoderConfig& config);

  /// Backbone plus stages 0..last_stage (defaults to S). Training requires
  /// targets and a noise generator; throws ConfigError otherwise.
  std::vector<StageOutput> run_multistage(const torch::Tensor& images, RunMode mode,
                                          const Targets* targets = nullptr,
                                          at::Generator* noise = nullptr, int last_stage = -1);

  StageOutput decode_stage0(const FeaturePyramid& pyramid, const torch::Tensor& holistic,
                            RunMode mode, const Targets* targets, at::Generator* noise);

  /// E(Y^{s-1}) as consumed by stage s under the configured feedback mode.
  torch::Tensor feedback_embedding(const StageOutput& prev, RunMode mode, const Targets* targets);

  JointFeatures reason_joint(const StageOutput& prev, const torch::Tensor& feedback_embedded);

  StageOutput decode_later_stage(int stage, const StageOutput& prev,
                                 const std::vector<torch::Tensor>& earlier_raw_glimpses,
                                 const FeaturePyramid& pyramid, const torch::Tensor& stage0_hidden,
                                 const torch::Tensor& holistic, RunMode mode,
                                 const Targets* targets, at::Generator* noise);

  /// Final-stage strings, cut at the first end-token.
  static std::vector<std::string> decode_text(const StageOutput& stage);

  const ModelDims& dims() const { return dims_; }
  const DecoderConfig& config() const { return config_; }
  DecoderConfig& mutable_config() { return config_; }

  Backbone backbone{nullptr};
  CharEmbedding embedding{nullptr};
  ReasoningEncoder visual_reasoner{nullptr};    // phi
  ReasoningEncoder semantic_reasoner{nullptr};  // omega
  torch::nn::Linear semantic_lift{nullptr};     // embed_dim -> hidden
  torch::nn::Linear logits_lift{nullptr};       // 37 -> embed_dim, logits feedback only
  torch::nn::Linear visual_aux_head{nullptr};
  torch::nn::Linear semantic_aux_head{nullptr};
  std::vector<torch::nn::LSTMCell> rnns;
  std::vector<Attention2d> attentions;
  std::vector<torch::nn::Linear> classifiers;
  std::vector<DenseFuse> fusers;  // index s - 1 for stage s
  torch::nn::LayerNorm residual_norm{nullptr};

 private:
  OneHotToken sample_token(const torch::Tensor& logits, RunMode mode, at::Generator* noise);

  ModelDims dims_;
  DecoderConfig config_;
};
TORCH_MODULE(Recognizer);

}  // namespace mstr
