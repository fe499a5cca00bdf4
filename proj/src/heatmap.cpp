#include "mstr/heatmap.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mstr/errors.hpp"
#include "mstr/vocab.hpp"

namespace mstr {

void write_heatmap(const torch::Tensor& alpha, const WordImage& image,
                   const std::filesystem::path& path, int scale) {
  if (alpha.dim() != 2) throw ShapeError("heatmap expects an H x W attention map");
  if (scale < 1) throw ConfigError("heatmap scale must be >= 1");
  const int h = static_cast<int>(alpha.size(0)), w = static_cast<int>(alpha.size(1));
  auto a = alpha.detach().to(torch::kFloat32).contiguous();
  cv::Mat weights(h, w, CV_32F, a.data_ptr<float>());
  double peak = 0.0;
  cv::minMaxLoc(weights, nullptr, &peak);
  cv::Mat gray;
  weights.convertTo(gray, CV_8U, peak > 0 ? 255.0 / peak : 0.0);
  cv::Mat colored;
  cv::applyColorMap(gray, colored, cv::COLORMAP_JET);

  cv::Mat input(kImageHeight, kImageWidth, CV_8UC3);
  for (int y = 0; y < kImageHeight; ++y) {
    for (int x = 0; x < kImageWidth; ++x) {
      auto& px = input.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        px[2 - c] = cv::saturate_cast<uchar>(image.at(c, y, x) * 255.0f + 0.5f);
      }
    }
  }
  cv::Mat base;
  cv::resize(input, base, cv::Size(w, h), 0, 0, cv::INTER_AREA);
  cv::Mat blended;
  cv::addWeighted(base, 0.45, colored, 0.55, 0.0, blended);
  if (scale > 1) cv::resize(blended, blended, cv::Size(w * scale, h * scale), 0, 0, cv::INTER_NEAREST);
  if (!cv::imwrite(path.string(), blended)) throw IOError("cannot write " + path.string());
}

AttentionExport export_attention(Recognizer& model, const WordImage& image,
                                 const std::filesystem::path& out_dir, int scale) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IOError("cannot create " + out_dir.string());
  torch::NoGradGuard no_grad;
  model->eval();
  auto pixels = torch::from_blob(const_cast<float*>(image.pixels.data()),
                                 {1, kImageChannels, kImageHeight, kImageWidth}, torch::kFloat32)
                    .clone();
  auto outputs = model->run_multistage(pixels, RunMode::kInfer);

  AttentionExport result;
  for (const auto& stage : outputs) result.stage_text.push_back(RecognizerImpl::decode_text(stage)[0]);
  const int steps = std::min<int>(static_cast<int>(result.stage_text.back().size()) + 1,
                                  static_cast<int>(outputs.back().attn_maps.size(1)));
  for (const auto& stage : outputs) {
    for (int t = 0; t < steps; ++t) {
      auto alpha = stage.attn_maps[0][t];
      HeatmapFile file;
      file.stage = stage.stage;
      file.step = t;
      file.height = static_cast<int>(alpha.size(0));
      file.width = static_cast<int>(alpha.size(1));
      file.alpha_sum = alpha.sum().item<double>();
      file.path = out_dir / ("stage" + std::to_string(stage.stage) + "_t" + std::to_string(t) + ".png");
      write_heatmap(alpha, image, file.path, scale);
      result.files.push_back(std::move(file));
    }
  }
  return result;
}

}  // namespace mstr
