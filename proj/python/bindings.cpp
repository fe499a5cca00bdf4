#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mstr/checkpoint.hpp"
#include "mstr/errors.hpp"
#include "mstr/gumbel.hpp"
#include "mstr/heatmap.hpp"
#include "mstr/objectives.hpp"
#include "mstr/pretrain.hpp"
#include "mstr/synth.hpp"
#include "mstr/train.hpp"

namespace py = pybind11;
using namespace mstr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * c.numel());
  return out;
}

py::array_t<double> to_numpy_double(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

torch::Tensor from_numpy(const DoubleArray& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

WordImage image_from_numpy(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(0) != kImageChannels || a.shape(1) != kImageHeight ||
      a.shape(2) != kImageWidth) {
    throw ShapeError("image must be a 3 x 32 x 100 float array");
  }
  WordImage image;
  image.pixels.assign(a.data(), a.data() + a.size());
  return image;
}

StyleParams style_for(bool clean) {
  StyleParams style;
  if (clean) {
    style.noise_sigma_max = 0.0;
    style.blur_sigma_max = 0.0;
    style.brightness_jitter = 0.0;
  }
  return style;
}

class PyRecognizer {
 public:
  explicit PyRecognizer(const std::filesystem::path& checkpoint)
      : model_(load_recognizer(checkpoint)) {}

  int num_stages() const { return model_->config().num_stages; }

  std::vector<std::string> predict(const FloatArray& image) {
    LabeledImage sample{image_from_numpy(image), encode_label("")};
    std::vector<std::string> out;
    for (const auto& stage : predict_stages(model_, {sample}, 1)) out.push_back(stage.front());
    return out;
  }

  std::vector<py::array_t<float>> attention_maps(const FloatArray& image) {
    auto wi = image_from_numpy(image);
    torch::NoGradGuard no_grad;
    model_->eval();
    auto pixels = torch::from_blob(wi.pixels.data(), {1, 3, kImageHeight, kImageWidth}).clone();
    std::vector<py::array_t<float>> maps;
    for (const auto& stage : model_->run_multistage(pixels, RunMode::kInfer)) {
      maps.push_back(to_numpy(stage.attn_maps[0]));
    }
    return maps;
  }

  std::string evaluate_json(const std::filesystem::path& manifest, int batch_size) {
    return evaluate(model_, load_manifest_samples(manifest), batch_size).to_json().dump();
  }

  std::vector<std::filesystem::path> export_attention(const FloatArray& image,
                                                      const std::filesystem::path& out_dir,
                                                      int scale) {
    std::vector<std::filesystem::path> paths;
    for (const auto& f : mstr::export_attention(model_, image_from_numpy(image), out_dir, scale).files) {
      paths.push_back(f.path);
    }
    return paths;
  }

 private:
  Recognizer model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-stage scene-text recognizer core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CharsetError>(m, "CharsetError", PyExc_ValueError);
  py::register_exception<LengthError>(m, "LengthError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<IOError>(m, "IOError", PyExc_OSError);

  m.attr("NUM_CLASSES") = kNumClasses;
  m.attr("MAX_LEN") = kMaxLen;
  m.attr("EOS_INDEX") = kNumClasses - 1;

  m.def("set_num_threads", [](int n) { torch::set_num_threads(n); });

  m.def("encode_label", [](const std::string& text) {
    auto label = encode_label(text);
    return py::make_tuple(std::vector<int64_t>(label.indices.begin(), label.indices.end()),
                          label.true_length,
                          std::vector<bool>(label.loss_mask.begin(), label.loss_mask.end()));
  });
  m.def("decode_sequence",
        [](const std::vector<int64_t>& indices) { return decode_sequence(indices); });

  m.def("render_word_image",
        [](const std::string& text, uint64_t seed, bool clean) {
          auto image = render_word_image(text, style_for(clean), seed);
          py::array_t<float> out({kImageChannels, kImageHeight, kImageWidth});
          std::copy(image.pixels.begin(), image.pixels.end(), out.mutable_data());
          return out;
        },
        py::arg("text"), py::arg("seed"), py::arg("clean") = false);
  m.def("generate_dataset",
        [](const std::vector<std::string>& lexicon, int count, uint64_t seed,
           const std::filesystem::path& out_dir, bool clean) {
          std::vector<std::pair<std::string, std::string>> rows;
          for (const auto& r : generate_dataset(lexicon, count, seed, out_dir, style_for(clean))) {
            rows.emplace_back(r.image_path, r.label);
          }
          return rows;
        },
        py::arg("lexicon"), py::arg("count"), py::arg("seed"), py::arg("out_dir"),
        py::arg("clean") = false);
  m.def("make_toy_lexicon", &make_toy_lexicon, py::arg("count"), py::arg("seed"),
        py::arg("min_len") = 3, py::arg("max_len") = 9);

  m.def("gumbel_from_uniform", &gumbel_from_uniform);
  m.def("gumbel_softmax_st",
        [](const DoubleArray& logits, const DoubleArray& noise, double tau) {
          auto token = gumbel_softmax_st(from_numpy(logits), from_numpy(noise), tau);
          return py::make_tuple(to_numpy_double(token.onehot), to_numpy_double(token.soft));
        },
        py::arg("logits"), py::arg("noise"), py::arg("tau") = 1.0);

  m.def("word_recognition_accuracy", &word_recognition_accuracy);
  m.def("char_edit_distance",
        [](const std::string& a, const std::string& b) { return char_edit_distance(a, b); });

  m.def("pretrain_semantic_json", [](const std::string& config_json) {
    auto config = PretrainConfig::from_json(nlohmann::json::parse(config_json));
    py::gil_scoped_release release;
    auto result = pretrain_semantic(config);
    nlohmann::json history = nlohmann::json::array();
    for (const auto& r : result.history) {
      history.push_back({{"step", r.step}, {"loss", r.loss}, {"masked_acc", r.masked_acc}});
    }
    return nlohmann::json{{"checkpoint", result.checkpoint.string()}, {"history", history}}.dump();
  });
  m.def("evaluate_masked_checkpoint",
        [](const std::filesystem::path& checkpoint, const std::vector<std::string>& words,
           uint64_t seed, double mask_rate) {
          auto model = load_semantic_checkpoint(checkpoint);
          return evaluate_masked(model, words, seed, mask_rate);
        },
        py::arg("checkpoint"), py::arg("words"), py::arg("seed") = 0, py::arg("mask_rate") = 0.15);
  m.def("train_json", [](const std::string& config_json) {
    auto config = TrainConfig::from_json(nlohmann::json::parse(config_json));
    py::gil_scoped_release release;
    return run_training(config).to_json().dump();
  });

  py::class_<PyRecognizer>(m, "Recognizer")
      .def(py::init<std::filesystem::path>(), py::arg("checkpoint"))
      .def_property_readonly("num_stages", &PyRecognizer::num_stages)
      .def("predict", &PyRecognizer::predict, py::arg("image"))
      .def("attention_maps", &PyRecognizer::attention_maps, py::arg("image"))
      .def("evaluate_json", &PyRecognizer::evaluate_json, py::arg("manifest"),
           py::arg("batch_size") = 64)
      .def("export_attention", &PyRecognizer::export_attention, py::arg("image"),
           py::arg("out_dir"), py::arg("scale") = 1);
}
