#include "mstr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mstr/errors.hpp"

namespace mstr {
namespace {

constexpr std::array<int, 5> kFonts = {
    cv::FONT_HERSHEY_SIMPLEX, cv::FONT_HERSHEY_DUPLEX, cv::FONT_HERSHEY_COMPLEX,
    cv::FONT_HERSHEY_TRIPLEX, cv::FONT_HERSHEY_COMPLEX_SMALL};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double luminance(const cv::Vec3d& rgb) {
  return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
}

cv::Vec3d random_color(std::mt19937_64& rng) {
  return {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
}

// Foreground/background pair whose luminance differs by at least min_contrast.
std::pair<cv::Vec3d, cv::Vec3d> contrasting_colors(std::mt19937_64& rng, double min_contrast) {
  cv::Vec3d bg = random_color(rng);
  for (int attempt = 0; attempt < 64; ++attempt) {
    cv::Vec3d fg = random_color(rng);
    if (std::abs(luminance(fg) - luminance(bg)) >= min_contrast) return {fg, bg};
  }
  return luminance(bg) > 0.5 ? std::pair{cv::Vec3d(0.05, 0.05, 0.05), bg}
                             : std::pair{cv::Vec3d(0.95, 0.95, 0.95), bg};
}

WordImage from_mat(const cv::Mat& rgb_u8, const std::string& label, uint64_t seed) {
  WordImage out;
  out.label = label;
  out.seed = seed;
  out.pixels.resize(static_cast<size_t>(kImageChannels) * kImageHeight * kImageWidth);
  for (int y = 0; y < kImageHeight; ++y) {
    const auto* row = rgb_u8.ptr<cv::Vec3b>(y);
    for (int x = 0; x < kImageWidth; ++x) {
      for (int c = 0; c < kImageChannels; ++c) {
        out.pixels[(static_cast<size_t>(c) * kImageHeight + y) * kImageWidth + x] =
            static_cast<float>(row[x][c]) / 255.0f;
      }
    }
  }
  return out;
}

cv::Mat to_mat(const WordImage& image) {
  cv::Mat rgb(kImageHeight, kImageWidth, CV_8UC3);
  for (int y = 0; y < kImageHeight; ++y) {
    auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < kImageWidth; ++x) {
      for (int c = 0; c < kImageChannels; ++c) {
        row[x][c] = cv::saturate_cast<uchar>(std::lround(image.at(c, y, x) * 255.0f));
      }
    }
  }
  return rgb;
}

uint64_t word_stream(uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL; }

}  // namespace

torch::Tensor Batch::targets() const {
  auto out = torch::empty({size(), kMaxLen}, torch::kInt64);
  auto acc = out.accessor<int64_t, 2>();
  for (int64_t n = 0; n < size(); ++n) {
    for (int t = 0; t < kMaxLen; ++t) acc[n][t] = labels[n].indices[t];
  }
  return out;
}

torch::Tensor Batch::mask() const {
  auto out = torch::empty({size(), kMaxLen}, torch::kBool);
  auto acc = out.accessor<bool, 2>();
  for (int64_t n = 0; n < size(); ++n) {
    for (int t = 0; t < kMaxLen; ++t) acc[n][t] = labels[n].loss_mask[t];
  }
  return out;
}

WordImage render_word_image(const std::string& text, const StyleParams& style, uint64_t seed) {
  const std::string word = to_lower(text);
  encode_label(word);  // validates charset and length

  std::mt19937_64 rng(seed);
  const int font = style.vary_font ? kFonts[rng() % kFonts.size()] : kFonts[0];
  const bool italic = style.vary_font && (rng() % 4 == 0);
  const int thickness = 1 + static_cast<int>(rng() % 3);
  const double scale = uniform(rng, 1.6, 2.2);
  auto [fg, bg] = contrasting_colors(rng, style.min_contrast);

  // Render large, then warp and shrink to the target size.
  int baseline = 0;
  const std::string drawn = word.empty() ? std::string(" ") : word;
  cv::Size text_size =
      cv::getTextSize(drawn, font | (italic ? cv::FONT_ITALIC : 0), scale, thickness, &baseline);
  const int pad_x = 8 + static_cast<int>(rng() % 10);
  const int pad_y = 6 + static_cast<int>(rng() % 6);
  const int width = std::max(text_size.width + 2 * pad_x, 3 * (text_size.height + baseline));
  const int height = text_size.height + baseline + 2 * pad_y;

  cv::Mat canvas(height, width, CV_64FC3, cv::Scalar(bg[0], bg[1], bg[2]));
  const int origin_x = (width - text_size.width) / 2;
  if (!word.empty()) {
    cv::putText(canvas, word, cv::Point(origin_x, pad_y + text_size.height),
                font | (italic ? cv::FONT_ITALIC : 0), scale, cv::Scalar(fg[0], fg[1], fg[2]),
                thickness, cv::LINE_AA);
  }

  const double angle = uniform(rng, -style.rotation_deg_max, style.rotation_deg_max);
  const double shear = uniform(rng, -style.shear_max, style.shear_max);
  cv::Mat affine = cv::getRotationMatrix2D(cv::Point2f(width / 2.0f, height / 2.0f), angle, 1.0);
  affine.at<double>(0, 1) += shear;
  affine.at<double>(0, 2) -= shear * height / 2.0;
  cv::Mat warped;
  cv::warpAffine(canvas, warped, affine, canvas.size(), cv::INTER_LINEAR, cv::BORDER_REPLICATE);

  cv::Mat small;
  cv::resize(warped, small, cv::Size(kImageWidth, kImageHeight), 0, 0, cv::INTER_AREA);

  const double blur = uniform(rng, 0.0, style.blur_sigma_max);
  if (blur > 0.3) cv::GaussianBlur(small, small, cv::Size(0, 0), blur);

  const double noise_sigma = uniform(rng, 0.0, style.noise_sigma_max);
  const double brightness = uniform(rng, -style.brightness_jitter, style.brightness_jitter);
  std::normal_distribution<double> noise(0.0, 1.0);
  cv::Mat out(kImageHeight, kImageWidth, CV_8UC3);
  for (int y = 0; y < kImageHeight; ++y) {
    const auto* src = small.ptr<cv::Vec3d>(y);
    auto* dst = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < kImageWidth; ++x) {
      for (int c = 0; c < kImageChannels; ++c) {
        double v = src[x][c] + brightness + noise_sigma * noise(rng);
        dst[x][c] = cv::saturate_cast<uchar>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return from_mat(out, word, seed);
}

const std::string& sample_word(const std::vector<std::string>& lexicon, uint64_t seed, int index) {
  if (lexicon.empty()) throw ConfigError("lexicon is empty");
  std::mt19937_64 rng(word_stream(seed + static_cast<uint64_t>(index)));
  return lexicon[rng() % lexicon.size()];
}

std::vector<LabeledImage> synthesize_samples(const std::vector<std::string>& lexicon, int count,
                                             uint64_t seed, const StyleParams& style) {
  if (lexicon.empty()) throw ConfigError("lexicon is empty");
  for (const auto& word : lexicon) encode_label(word);
  std::vector<LabeledImage> out;
  out.reserve(static_cast<size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const auto sample_seed = seed + static_cast<uint64_t>(i);
    const auto& word = sample_word(lexicon, seed, i);
    out.push_back({render_word_image(word, style, sample_seed), encode_label(word)});
  }
  return out;
}

Manifest generate_dataset(const std::vector<std::string>& lexicon, int count, uint64_t seed,
                          const std::filesystem::path& out_dir, const StyleParams& style) {
  auto samples = synthesize_samples(lexicon, count, seed, style);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IOError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  Manifest manifest;
  manifest.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream name;
    name << "images/" << std::setw(6) << std::setfill('0') << i << ".png";
    save_image(samples[i].image, out_dir / name.str());
    manifest.push_back({name.str(), samples[i].image.label});
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

Batch make_batch(const std::vector<LabeledImage>& samples) {
  if (samples.empty()) throw ShapeError("cannot batch an empty sample list");
  const auto n = static_cast<int64_t>(samples.size());
  constexpr int64_t plane = int64_t{kImageChannels} * kImageHeight * kImageWidth;
  Batch batch;
  batch.images = torch::empty({n, kImageChannels, kImageHeight, kImageWidth}, torch::kFloat32);
  float* dst = batch.images.data_ptr<float>();
  batch.labels.reserve(samples.size());
  for (int64_t i = 0; i < n; ++i) {
    const auto& px = samples[i].image.pixels;
    if (static_cast<int64_t>(px.size()) != plane) {
      throw ShapeError("sample " + std::to_string(i) + " is not 3x32x100");
    }
    std::copy(px.begin(), px.end(), dst + i * plane);
    batch.labels.push_back(samples[i].label);
  }
  return batch;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write manifest " + path.string());
  for (const auto& rec : manifest) out << rec.image_path << '\t' << rec.label << '\n';
  if (!out) throw IOError("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open manifest " + path.string());
  Manifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw IOError("malformed manifest row: " + line);
    manifest.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return manifest;
}

std::vector<LabeledImage> load_manifest_samples(const std::filesystem::path& manifest_path) {
  const auto root = manifest_path.parent_path();
  std::vector<LabeledImage> out;
  for (const auto& rec : read_manifest(manifest_path)) {
    auto image = load_image(root / rec.image_path);
    image.label = to_lower(rec.label);
    out.push_back({std::move(image), encode_label(rec.label)});
  }
  return out;
}

WordImage load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IOError("cannot read image " + path.string());
  if (bgr.rows != kImageHeight || bgr.cols != kImageWidth) {
    cv::resize(bgr, bgr, cv::Size(kImageWidth, kImageHeight), 0, 0, cv::INTER_AREA);
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb, "", 0);
}

void save_image(const WordImage& image, const std::filesystem::path& path) {
  cv::Mat bgr;
  cv::cvtColor(to_mat(image), bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw IOError("cannot write image " + path.string());
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open word list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r\n");
    words.push_back(line.substr(first, last - first + 1));
  }
  return words;
}

std::vector<std::string> make_toy_lexicon(int count, uint64_t seed, int min_len, int max_len) {
  static constexpr std::string_view kOnsets[] = {"b", "c", "d", "f", "g", "h", "j", "k",
                                                 "l", "m", "n", "p", "r", "s", "t", "v",
                                                 "w", "z", "br", "ch", "st", "tr", "pl", "sh"};
  static constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
  static constexpr std::string_view kCodas[] = {"", "", "", "n", "r", "s", "t", "l", "ng", "x"};
  std::mt19937_64 rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (static_cast<int>(words.size()) < count) {
    const int target = min_len + static_cast<int>(rng() % (max_len - min_len + 1));
    std::string word;
    while (static_cast<int>(word.size()) < target) {
      word += kOnsets[rng() % std::size(kOnsets)];
      word += kVowels[rng() % std::size(kVowels)];
      word += kCodas[rng() % std::size(kCodas)];
    }
    if (static_cast<int>(word.size()) > max_len) word.resize(max_len);
    if (rng() % 5 == 0) word += static_cast<char>('0' + rng() % 10);
    if (static_cast<int>(word.size()) > kMaxTextLen) continue;
    if (seen.insert(word).second) words.push_back(word);
  }
  return words;
}

}  // namespace mstr
