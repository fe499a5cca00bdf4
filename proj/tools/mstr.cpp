#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "mstr/checkpoint.hpp"
#include "mstr/config_io.hpp"
#include "mstr/errors.hpp"
#include "mstr/heatmap.hpp"
#include "mstr/pretrain.hpp"
#include "mstr/synth.hpp"
#include "mstr/train.hpp"

namespace {

using namespace mstr;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct DimFlags {
  std::optional<int64_t> feature_dim, attn_dim, hidden_dim, embed_dim, num_heads, ffn_dim,
      reasoning_layers;
  std::optional<double> channels_scale;

  void attach(CLI::App* app) {
    app->add_option("--feature-dim", feature_dim, "Pyramid channels");
    app->add_option("--attn-dim", attn_dim, "2D attention hidden width");
    app->add_option("--hidden-dim", hidden_dim, "Decoder/reasoning width");
    app->add_option("--embed-dim", embed_dim, "Character embedding width");
    app->add_option("--heads", num_heads, "Reasoning attention heads");
    app->add_option("--ffn-dim", ffn_dim, "Reasoning feed-forward width");
    app->add_option("--reasoning-layers", reasoning_layers, "Reasoning encoder depth");
    app->add_option("--channels-scale", channels_scale, "Backbone internal width multiplier");
  }

  ModelDims apply(ModelDims dims) const {
    auto j = dims_to_json(dims);
    if (feature_dim) j["feature_dim"] = *feature_dim;
    if (attn_dim) j["attn_dim"] = *attn_dim;
    if (hidden_dim) j["hidden_dim"] = *hidden_dim;
    if (embed_dim) j["embed_dim"] = *embed_dim;
    if (num_heads) j["num_heads"] = *num_heads;
    if (ffn_dim) j["ffn_dim"] = *ffn_dim;
    if (reasoning_layers) j["reasoning_layers"] = *reasoning_layers;
    if (channels_scale) j["channels_scale"] = *channels_scale;
    return dims_from_json(j);
  }
};

nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  if (!fs::exists(path)) throw ConfigError("config file " + path + " does not exist");
  try {
    return read_json_file(path);
  } catch (const IOError& e) {
    throw ConfigError(e.what());
  }
}

// ---- gen-data ----------------------------------------------------------

struct GenDataArgs {
  std::string lexicon;
  int toy_words = 0;
  uint64_t lexicon_seed = 0;
  int count = 1000;
  uint64_t seed = 0;
  std::string out;
  std::string write_lexicon;
  bool clean = false;
};

int run_gen_data(const GenDataArgs& a) {
  if (a.lexicon.empty() == (a.toy_words == 0)) {
    throw ConfigError("give exactly one of --lexicon or --toy-words");
  }
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  auto words = a.lexicon.empty() ? make_toy_lexicon(a.toy_words, a.lexicon_seed)
                                 : read_word_list(a.lexicon);
  if (words.empty()) throw ConfigError("lexicon is empty");
  if (!a.write_lexicon.empty()) {
    std::ofstream out(a.write_lexicon);
    if (!out) throw IOError("cannot write " + a.write_lexicon);
    for (const auto& w : words) out << w << '\n';
  }
  StyleParams style;
  if (a.clean) {
    style.noise_sigma_max = 0.0;
    style.blur_sigma_max = 0.0;
    style.brightness_jitter = 0.0;
  }
  auto manifest = generate_dataset(words, a.count, a.seed, a.out, style);
  std::cout << "wrote " << manifest.size() << " images to " << (fs::path(a.out) / "manifest.tsv")
            << "\n";
  return kExitOk;
}

// ---- pretrain-semantic ---------------------------------------------------

struct PretrainArgs {
  std::string config;
  std::string corpus, out;
  std::optional<int> steps, batch_size, log_every;
  std::optional<double> lr, mask_rate;
  std::optional<uint64_t> seed;
  DimFlags dims;
};

int run_pretrain(const PretrainArgs& a) {
  auto cfg = PretrainConfig::from_json(load_config_file(a.config));
  if (!a.corpus.empty()) cfg.corpus = a.corpus;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.steps) cfg.steps = *a.steps;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.log_every) cfg.log_every = *a.log_every;
  if (a.lr) cfg.lr = *a.lr;
  if (a.mask_rate) cfg.mask_rate = *a.mask_rate;
  if (a.seed) cfg.seed = *a.seed;
  cfg.dims = a.dims.apply(cfg.dims);
  if (cfg.corpus.empty()) throw ConfigError("--corpus is required");
  if (cfg.out_dir.empty()) throw ConfigError("--out is required");
  cfg.validate();
  if (!fs::exists(cfg.corpus)) throw IOError("corpus " + cfg.corpus.string() + " does not exist");
  auto result = pretrain_semantic(cfg, [](const PretrainRecord& r) {
    std::cerr << "step " << r.step << " loss " << r.loss << " masked_acc " << r.masked_acc << "\n";
  });
  auto words = read_word_list(cfg.corpus);
  auto model = load_semantic_checkpoint(result.checkpoint);
  nlohmann::json report = {{"checkpoint", result.checkpoint.string()},
                           {"masked_acc", evaluate_masked(model, words, cfg.seed + 1, cfg.mask_rate)}};
  std::cout << report.dump() << "\n";
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string train_manifest, val_manifest, out, semantic;
  std::optional<int> stages, batch_size, warmup, steps, checkpoint_every, eval_every, log_every;
  std::optional<double> lr, tau;
  std::optional<uint64_t> seed;
  std::string feedback, later_init;
  DimFlags dims;
};

int run_train(const TrainArgs& a) {
  auto cfg = TrainConfig::from_json(load_config_file(a.config));
  if (!a.train_manifest.empty()) cfg.train_manifest = a.train_manifest;
  if (!a.val_manifest.empty()) cfg.val_manifest = a.val_manifest;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (!a.semantic.empty()) cfg.semantic_checkpoint = a.semantic;
  if (a.stages) cfg.stages = *a.stages;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.warmup) cfg.warmup_steps = *a.warmup;
  if (a.steps) cfg.total_steps = *a.steps;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.eval_every) cfg.eval_every = *a.eval_every;
  if (a.log_every) cfg.log_every = *a.log_every;
  if (a.lr) cfg.lr = *a.lr;
  if (a.tau) cfg.tau = *a.tau;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.feedback.empty()) cfg.feedback = parse_feedback_mode(a.feedback);
  if (!a.later_init.empty()) cfg.later_init = parse_later_init(a.later_init);
  cfg.dims = a.dims.apply(cfg.dims);
  cfg.validate();
  if (cfg.train_manifest.empty()) throw ConfigError("--train is required");
  for (const auto& path : {cfg.train_manifest, cfg.val_manifest, cfg.semantic_checkpoint}) {
    if (!path.empty() && !fs::exists(path) && !fs::exists(path + ".json")) {
      throw ConfigError(path + " does not exist");
    }
  }

  RunCallbacks callbacks;
  const int log_every = std::max(1, cfg.log_every);
  callbacks.on_step = [log_every](const StepStats& s) {
    if (s.step % log_every == 0 || s.step == 1) {
      std::cerr << "step " << s.step << " phase " << s.phase << " loss " << s.total << " l_c "
                << s.l_c << "\n";
    }
  };
  callbacks.on_eval = [](int step, const EvalReport& r) {
    std::cerr << "eval step " << step << " " << r.to_json().dump() << "\n";
  };
  auto report = run_training(cfg, callbacks);
  nlohmann::json out = report.to_json();
  out["checkpoint"] = (fs::path(cfg.out_dir) / "checkpoints" / "final").string();
  std::cout << out.dump() << "\n";
  return kExitOk;
}

// ---- eval / predict / export-attention -------------------------------------

void require_checkpoint(const std::string& path) {
  if (!fs::exists(checkpoint_stem(path).string() + ".json")) {
    throw IOError("checkpoint " + path + " not found");
  }
}

int run_eval(const std::string& checkpoint, const std::string& manifest, int batch_size,
             const std::string& report_path) {
  require_checkpoint(checkpoint);
  auto model = load_recognizer(checkpoint);
  auto report = evaluate(model, load_manifest_samples(manifest), batch_size);
  if (!report_path.empty()) write_json_file(report_path, report.to_json());
  std::cout << report.to_json().dump() << "\n";
  return kExitOk;
}

int run_predict(const std::string& checkpoint, const std::string& image_path) {
  require_checkpoint(checkpoint);
  auto model = load_recognizer(checkpoint);
  LabeledImage sample{load_image(image_path), encode_label("")};
  for (const auto& stage : predict_stages(model, {sample}, 1)) std::cout << stage.front() << "\n";
  return kExitOk;
}

int run_export(const std::string& checkpoint, const std::string& image_path,
               const std::string& out_dir, int scale) {
  if (scale < 1) throw ConfigError("--scale must be >= 1");
  require_checkpoint(checkpoint);
  auto model = load_recognizer(checkpoint);
  auto result = export_attention(model, load_image(image_path), out_dir, scale);
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : result.files) {
    files.push_back({{"stage", f.stage}, {"step", f.step}, {"path", f.path.string()},
                     {"height", f.height}, {"width", f.width}, {"alpha_sum", f.alpha_sum}});
  }
  nlohmann::json summary = {{"stage_text", result.stage_text}, {"files", files}};
  write_json_file(fs::path(out_dir) / "attention.json", summary);
  std::cout << "wrote " << result.files.size() << " heatmaps to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage scene-text recognizer"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic word-image dataset");
  gen_cmd->add_option("--lexicon", gen.lexicon, "Word list, one per line");
  gen_cmd->add_option("--toy-words", gen.toy_words, "Use N generated pseudo-words instead");
  gen_cmd->add_option("--lexicon-seed", gen.lexicon_seed, "Seed for --toy-words");
  gen_cmd->add_option("--count", gen.count, "Number of images");
  gen_cmd->add_option("--seed", gen.seed, "Rendering seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--write-lexicon", gen.write_lexicon, "Also save the word list here");
  gen_cmd->add_flag("--clean", gen.clean, "Disable noise, blur and brightness jitter");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain-semantic", "Masked pretraining of the semantic reasoner");
  pre_cmd->add_option("--config", pre.config, "JSON config; flags override it");
  pre_cmd->add_option("--corpus", pre.corpus, "Word list, one per line");
  pre_cmd->add_option("--out", pre.out, "Output directory");
  pre_cmd->add_option("--steps", pre.steps);
  pre_cmd->add_option("--batch-size", pre.batch_size);
  pre_cmd->add_option("--lr", pre.lr);
  pre_cmd->add_option("--mask-rate", pre.mask_rate);
  pre_cmd->add_option("--seed", pre.seed);
  pre_cmd->add_option("--log-every", pre.log_every);
  pre.dims.attach(pre_cmd);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Warm-up then end-to-end multi-stage training");
  train_cmd->add_option("--config", tr.config, "JSON config; flags override it");
  train_cmd->add_option("--train", tr.train_manifest, "Training manifest.tsv");
  train_cmd->add_option("--val", tr.val_manifest, "Held-out manifest.tsv");
  train_cmd->add_option("--out", tr.out, "Run directory");
  train_cmd->add_option("--semantic", tr.semantic, "Pretrained semantic checkpoint");
  train_cmd->add_option("--stages", tr.stages, "Refinement stages S (0..2)");
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--warmup", tr.warmup, "Stage-0-only steps");
  train_cmd->add_option("--steps", tr.steps, "Total steps including warm-up");
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--tau", tr.tau, "Gumbel-Softmax temperature");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--feedback", tr.feedback, "gumbel_st|hard_argmax|logits|ground_truth");
  train_cmd->add_option("--later-init", tr.later_init, "zeros|holistic");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
  train_cmd->add_option("--eval-every", tr.eval_every);
  train_cmd->add_option("--log-every", tr.log_every);
  tr.dims.attach(train_cmd);

  std::string checkpoint, manifest, image, out_dir, report_path;
  int batch_size = 64, scale = 1;
  auto* eval_cmd = app.add_subcommand("eval", "Per-stage WRA and edit distance on a manifest");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--manifest", manifest)->required();
  eval_cmd->add_option("--batch-size", batch_size);
  eval_cmd->add_option("--report", report_path, "Also write the JSON report here");

  auto* predict_cmd = app.add_subcommand("predict", "Print one prediction per stage");
  predict_cmd->add_option("--checkpoint", checkpoint)->required();
  predict_cmd->add_option("image", image, "Input image")->required();

  auto* export_cmd = app.add_subcommand("export-attention", "Write per-step attention heatmaps");
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--image", image)->required();
  export_cmd->add_option("--out", out_dir)->required();
  export_cmd->add_option("--scale", scale, "Nearest-neighbor upscaling factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*pre_cmd) return run_pretrain(pre);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(checkpoint, manifest, batch_size, report_path);
    if (*predict_cmd) return run_predict(checkpoint, image);
    if (*export_cmd) return run_export(checkpoint, image, out_dir, scale);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
