#include "mstr/decoder.hpp"

#include "mstr/errors.hpp"
#include "mstr/vocab.hpp"

namespace mstr {
namespace nn = torch::nn;

std::string to_string(FeedbackMode mode) {
  switch (mode) {
    case FeedbackMode::kGumbelST: return "gumbel_st";
    case FeedbackMode::kHardArgmax: return "hard_argmax";
    case FeedbackMode::kLogits: return "logits";
    case FeedbackMode::kGroundTruth: return "ground_truth";
  }
  return "gumbel_st";
}

FeedbackMode parse_feedback_mode(const std::string& text) {
  if (text == "gumbel_st") return FeedbackMode::kGumbelST;
  if (text == "hard_argmax") return FeedbackMode::kHardArgmax;
  if (text == "logits") return FeedbackMode::kLogits;
  if (text == "ground_truth") return FeedbackMode::kGroundTruth;
  throw ConfigError("unknown feedback mode '" + text + "'");
}

std::string to_string(LaterInit init) {
  return init == LaterInit::kZeros ? "zeros" : "holistic";
}

LaterInit parse_later_init(const std::string& text) {
  if (text == "zeros") return LaterInit::kZeros;
  if (text == "holistic") return LaterInit::kHolistic;
  throw ConfigError("unknown later_init '" + text + "'");
}

void DecoderConfig::validate() const {
  if (num_stages < 0) throw ConfigError("num_stages must be >= 0");
  if (num_stages >= FeaturePyramid::kNumLevels) {
    throw ConfigError("stage " + std::to_string(num_stages) + " would attend level L-" +
                      std::to_string(num_stages) + ", which the pyramid does not provide");
  }
  if (max_len != kMaxLen) throw ConfigError("max_len must be " + std::to_string(kMaxLen));
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
}

RecognizerImpl::RecognizerImpl(const ModelDims& dims, const DecoderConfig& config)
    : dims_(dims), config_(config) {
  config_.validate();
  const int stages = config_.num_stages;
  backbone = register_module("backbone", Backbone(dims));
  embedding = register_module("embedding", CharEmbedding(kNumClasses, dims.embed_dim));
  if (stages >= 1) {
    visual_reasoner = register_module("visual_reasoner", make_reasoning_encoder(dims));
    semantic_reasoner = register_module("semantic_reasoner", make_reasoning_encoder(dims));
    semantic_lift = register_module("semantic_lift", nn::Linear(dims.embed_dim, dims.hidden_dim));
    logits_lift = register_module("logits_lift", nn::Linear(kNumClasses, dims.embed_dim));
    visual_aux_head = register_module("visual_aux_head", nn::Linear(dims.hidden_dim, kNumClasses));
    semantic_aux_head =
        register_module("semantic_aux_head", nn::Linear(dims.hidden_dim, kNumClasses));
    residual_norm = register_module("residual_norm",
                                    nn::LayerNorm(nn::LayerNormOptions({dims.hidden_dim})));
  }
  for (int s = 0; s <= stages; ++s) {
    const auto tag = std::to_string(s);
    const int64_t input = s == 0 ? dims.stage0_input_dim() : dims.later_input_dim();
    const int64_t query = s == 0 ? dims.hidden_dim : dims.later_query_dim();
    rnns.push_back(register_module("rnn" + tag, nn::LSTMCell(input, dims.hidden_dim)));
    attentions.push_back(
        register_module("attention" + tag, Attention2d(dims.feature_dim, query, dims.attn_dim)));
    classifiers.push_back(
        register_module("classifier" + tag, nn::Linear(dims.hidden_dim, kNumClasses)));
    if (s >= 1) {
      fusers.push_back(register_module("fuse" + tag, DenseFuse(s + 1, dims.feature_dim)));
    }
  }
}

OneHotToken RecognizerImpl::sample_token(const torch::Tensor& logits, RunMode mode,
                                         at::Generator* noise) {
  if (mode == RunMode::kInfer || config_.feedback != FeedbackMode::kGumbelST) {
    return hard_argmax(logits);
  }
  auto g = sample_gumbel_noise(logits.sizes(), *noise, logits.scalar_type());
  return gumbel_softmax_st(logits, g, config_.tau);
}

std::vector<StageOutput> RecognizerImpl::run_multistage(const torch::Tensor& images, RunMode mode,
                                                        const Targets* targets,
                                                        at::Generator* noise, int last_stage) {
  if (last_stage < 0) last_stage = config_.num_stages;
  if (last_stage > config_.num_stages) {
    throw ConfigError("requested stage " + std::to_string(last_stage) + " beyond S=" +
                      std::to_string(config_.num_stages));
  }
  if (mode == RunMode::kTrain && (targets == nullptr || noise == nullptr)) {
    throw ConfigError("training mode requires labels and a noise generator");
  }
  auto pyramid = backbone->extract_pyramid(images);
  auto holistic = backbone->encode_holistic(pyramid);

  std::vector<StageOutput> outputs;
  outputs.push_back(decode_stage0(pyramid, holistic, mode, targets, noise));
  std::vector<torch::Tensor> raw_glimpses{outputs.front().raw_glimpses};
  for (int s = 1; s <= last_stage; ++s) {
    outputs.push_back(decode_later_stage(s, outputs.back(), raw_glimpses, pyramid,
                                         outputs.front().hidden, holistic, mode, targets, noise));
    raw_glimpses.push_back(outputs.back().raw_glimpses);
  }
  return outputs;
}

StageOutput RecognizerImpl::decode_stage0(const FeaturePyramid& pyramid,
                                          const torch::Tensor& holistic, RunMode mode,
                                          const Targets* targets, at::Generator* noise) {
  if (mode == RunMode::kTrain && (targets == nullptr || noise == nullptr)) {
    throw ConfigError("training mode requires labels and a noise generator");
  }
  const auto& feature_map = pyramid.b_L;
  const auto n = feature_map.size(0);
  auto& attention = attentions[0];
  auto projected = attention->project_features(feature_map);

  auto h = backbone->init_decoder_state(holistic);
  auto c = torch::zeros_like(h);
  auto prev_embed = torch::zeros({n, dims_.embed_dim}, h.options());  // start symbol

  std::vector<torch::Tensor> hs, logits, tokens, glimpses, maps;
  for (int t = 0; t < config_.max_len; ++t) {
    auto glimpse = attention->attend_projected(feature_map, projected, h);
    std::tie(h, c) = rnns[0]->forward(torch::cat({prev_embed, glimpse.glimpse}, 1),
                                      std::make_tuple(h, c));
    auto step_logits = classifiers[0](h);
    auto token = sample_token(step_logits, mode, noise);

    if (mode == RunMode::kTrain && config_.teacher_forcing) {
      prev_embed = embedding->embed_index(targets->indices.select(1, t));
    } else {
      prev_embed = embedding->embed_onehot(hard_argmax(step_logits).onehot);
    }
    hs.push_back(h);
    logits.push_back(step_logits);
    tokens.push_back(token.onehot);
    glimpses.push_back(glimpse.glimpse);
    maps.push_back(glimpse.attn_map);
  }
  StageOutput out;
  out.stage = 0;
  out.hidden = torch::stack(hs, 1);
  out.logits = torch::stack(logits, 1);
  out.tokens = torch::stack(tokens, 1);
  out.raw_glimpses = torch::stack(glimpses, 1);
  out.glimpses = out.raw_glimpses;
  out.attn_maps = torch::stack(maps, 1);
  return out;
}

torch::Tensor RecognizerImpl::feedback_embedding(const StageOutput& prev, RunMode mode,
                                                 const Targets* targets) {
  switch (config_.feedback) {
    case FeedbackMode::kLogits:
      return logits_lift(prev.logits);
    case FeedbackMode::kGroundTruth:
      if (mode == RunMode::kTrain) {
        if (targets == nullptr) throw ConfigError("ground-truth feedback requires labels");
        return embedding->embed_index(targets->indices);
      }
      return embedding->embed_onehot(prev.tokens);
    case FeedbackMode::kHardArgmax:
      return embedding->embed_onehot(prev.tokens.detach());
    case FeedbackMode::kGumbelST:
      break;
  }
  return embedding->embed_onehot(prev.tokens);
}

JointFeatures RecognizerImpl::reason_joint(const StageOutput& prev,
                                           const torch::Tensor& feedback_embedded) {
  if (!visual_reasoner) throw ConfigError("reasoning modules are not built when S = 0");
  if (prev.hidden.size(1) != config_.max_len || feedback_embedded.size(1) != config_.max_len) {
    throw ShapeError("reasoning needs the previous stage fully unrolled");
  }
  JointFeatures out;
  out.visual = visual_reasoner(prev.hidden);
  out.semantic = semantic_reasoner(semantic_lift(feedback_embedded));
  out.joint = torch::cat({out.visual, out.semantic}, 2);
  return out;
}

StageOutput RecognizerImpl::decode_later_stage(int stage, const StageOutput& prev,
                                               const std::vector<torch::Tensor>& earlier_raw_glimpses,
                                               const FeaturePyramid& pyramid,
                                               const torch::Tensor& stage0_hidden,
                                               const torch::Tensor& holistic, RunMode mode,
                                               const Targets* targets, at::Generator* noise) {
  if (stage < 1 || stage > config_.num_stages) {
    throw ConfigError("stage " + std::to_string(stage) + " is not a refinement stage");
  }
  if (static_cast<int>(earlier_raw_glimpses.size()) != stage) {
    throw ShapeError("stage " + std::to_string(stage) + " needs glimpses from every earlier stage");
  }
  const auto& feature_map = pyramid.level(stage);
  auto& attention = attentions[stage];
  auto& fuse = fusers[stage - 1];
  const bool final_stage = stage == config_.num_stages;

  auto feedback = feedback_embedding(prev, mode, targets);
  auto joint = reason_joint(prev, feedback);
  auto projected = attention->project_features(feature_map);

  auto h = config_.later_init == LaterInit::kHolistic
               ? backbone->init_decoder_state(holistic)
               : torch::zeros({feature_map.size(0), dims_.hidden_dim}, feature_map.options());
  auto c = torch::zeros_like(h);

  std::vector<torch::Tensor> hs, residuals, logits, tokens, fused, raw, maps;
  for (int t = 0; t < config_.max_len; ++t) {
    auto mu = joint.joint.select(1, t);
    auto glimpse = attention->attend_projected(feature_map, projected, torch::cat({mu, h}, 1));
    std::vector<torch::Tensor> dense{glimpse.glimpse};
    for (int earlier = stage - 1; earlier >= 0; --earlier) {
      dense.push_back(earlier_raw_glimpses[earlier].select(1, t));
    }
    auto fused_glimpse = fuse->forward(dense);
    std::tie(h, c) = rnns[stage]->forward(
        torch::cat({feedback.select(1, t), fused_glimpse, mu}, 1), std::make_tuple(h, c));

    torch::Tensor step_logits;
    if (final_stage) {
      auto residual = residual_norm(h + stage0_hidden.select(1, t));
      residuals.push_back(residual);
      step_logits = classifiers[stage](residual);
    } else {
      step_logits = classifiers[stage](h);
    }
    hs.push_back(h);
    logits.push_back(step_logits);
    tokens.push_back(sample_token(step_logits, mode, noise).onehot);
    fused.push_back(fused_glimpse);
    raw.push_back(glimpse.glimpse);
    maps.push_back(glimpse.attn_map);
  }
  StageOutput out;
  out.stage = stage;
  out.hidden = torch::stack(hs, 1);
  out.logits = torch::stack(logits, 1);
  out.tokens = torch::stack(tokens, 1);
  out.glimpses = torch::stack(fused, 1);
  out.raw_glimpses = torch::stack(raw, 1);
  out.attn_maps = torch::stack(maps, 1);
  out.joint = std::move(joint);
  if (final_stage) out.residual_hidden = torch::stack(residuals, 1);
  return out;
}

std::vector<std::string> RecognizerImpl::decode_text(const StageOutput& stage) {
  auto indices = argmax_lowest(stage.logits.detach()).contiguous();
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(indices.size(0)));
  for (int64_t n = 0; n < indices.size(0); ++n) {
    auto row = indices[n];
    out.push_back(decode_sequence({row.data_ptr<int64_t>(), static_cast<size_t>(row.size(0))}));
  }
  return out;
}

}  // namespace mstr
