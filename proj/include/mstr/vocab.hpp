#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mstr {

inline constexpr int kNumClasses = 37;
inline constexpr int kMaxLen = 25;
// Longest encodable word; one slot is reserved for the end-token.
inline constexpr int kMaxTextLen = kMaxLen - 1;

/// Character space: a-z at 0..25, 0-9 at 26..35, end-token at 36.
class CharVocabulary {
 public:
  CharVocabulary();

  int size() const { return kNumClasses; }
  int eos_index() const { return kNumClasses - 1; }

  /// Glyph for an index; the end-token renders as '$'.
  char symbol(int index) const;
  /// Index of a glyph after lowercasing, or -1 when outside the charset.
  int index_of(char glyph) const;
  bool contains(char glyph) const { return index_of(glyph) >= 0; }

 private:
  std::array<char, kNumClasses> symbols_{};
  std::array<int, 256> lookup_{};
};

/// Returns the canonical 37-class vocabulary.
const CharVocabulary& build_vocabulary();

struct LabelSequence {
  std::array<int64_t, kMaxLen> indices{};
  int true_length = 1;
  std::array<bool, kMaxLen> loss_mask{};
};

std::string to_lower(std::string_view text);

/// Validates, lowercases and pads `text` with end-tokens up to kMaxLen.
/// Throws CharsetError or LengthError.
LabelSequence encode_label(std::string_view text,
                           const CharVocabulary& vocab = build_vocabulary());

/// Concatenates glyphs up to (excluding) the first end-token.
/// Throws IndexError on an out-of-range index.
std::string decode_sequence(std::span<const int64_t> indices,
                            const CharVocabulary& vocab = build_vocabulary());

}  // namespace mstr
