#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mstr/vocab.hpp"

namespace mstr {

inline constexpr int kImageChannels = 3;
inline constexpr int kImageHeight = 32;
inline constexpr int kImageWidth = 100;

/// Ranges for the seeded rendering jitter. Each sample draws its own value
/// uniformly inside the range.
struct StyleParams {
  double noise_sigma_max = 0.04;     // additive Gaussian pixel noise
  double blur_sigma_max = 0.9;       // Gaussian blur
  double brightness_jitter = 0.08;   // additive brightness offset
  double rotation_deg_max = 3.0;
  double shear_max = 0.20;
  double min_contrast = 0.35;        // luminance gap between text and background
  bool vary_font = true;
};

/// CHW pixels in [0, 1], quantized to 8-bit levels so PNG storage is lossless.
struct WordImage {
  std::vector<float> pixels;
  std::string label;
  uint64_t seed = 0;

  float at(int c, int y, int x) const {
    return pixels[(static_cast<size_t>(c) * kImageHeight + y) * kImageWidth + x];
  }
};

struct Batch {
  torch::Tensor images;  // N x 3 x 32 x 100, float32
  std::vector<LabelSequence> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  /// N x 25 int64 class targets.
  torch::Tensor targets() const;
  /// N x 25 bool loss mask.
  torch::Tensor mask() const;
};

struct ManifestRecord {
  std::string image_path;  // relative to the manifest directory
  std::string label;
};

using Manifest = std::vector<ManifestRecord>;

struct LabeledImage {
  WordImage image;
  LabelSequence label;
};

/// Deterministic word render: identical (text, style, seed) yields identical pixels.
WordImage render_word_image(const std::string& text, const StyleParams& style, uint64_t seed);

/// Writes `count` PNGs under out_dir/images plus out_dir/manifest.tsv. Sample i
/// draws its word and its rendering from seed + i.
Manifest generate_dataset(const std::vector<std::string>& lexicon, int count, uint64_t seed,
                          const std::filesystem::path& out_dir,
                          const StyleParams& style = {});

/// In-memory equivalent of generate_dataset (same words, same pixels).
std::vector<LabeledImage> synthesize_samples(const std::vector<std::string>& lexicon, int count,
                                             uint64_t seed, const StyleParams& style = {});

/// Word chosen for sample `index` of a dataset generated with `seed`.
const std::string& sample_word(const std::vector<std::string>& lexicon, uint64_t seed,
                               int index);

Batch make_batch(const std::vector<LabeledImage>& samples);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);
/// Loads every record of a manifest; images are resized to 100x32 when needed.
std::vector<LabeledImage> load_manifest_samples(const std::filesystem::path& manifest_path);

WordImage load_image(const std::filesystem::path& path);
void save_image(const WordImage& image, const std::filesystem::path& path);

/// One word per line, trimmed, empty lines skipped. Throws IOError.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

/// Pronounceable lowercase pseudo-words for self-contained corpora.
std::vector<std::string> make_toy_lexicon(int count, uint64_t seed, int min_len = 3,
                                          int max_len = 9);

}  // namespace mstr
