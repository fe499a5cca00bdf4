#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mstr/decoder.hpp"
#include "mstr/synth.hpp"

namespace mstr {

struct HeatmapFile {
  int stage = 0;
  int step = 0;
  std::filesystem::path path;
  int height = 0;  // attended level resolution before scaling
  int width = 0;
  double alpha_sum = 0.0;
};

struct AttentionExport {
  std::vector<std::string> stage_text;
  std::vector<HeatmapFile> files;
};

/// Colorized attention map blended over the input image resized to the map's
/// resolution, then upscaled by `scale` with nearest-neighbor. 8-bit BGR PNG.
void write_heatmap(const torch::Tensor& alpha, const WordImage& image,
                   const std::filesystem::path& path, int scale = 1);

/// Runs inference on one image and writes `stage{s}_t{t}.png` for every stage
/// and every step up to the final-stage end-token.
AttentionExport export_attention(Recognizer& model, const WordImage& image,
                                 const std::filesystem::path& out_dir, int scale = 1);

}  // namespace mstr
