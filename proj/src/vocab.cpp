#include "mstr/vocab.hpp"

#include <cctype>

#include "mstr/errors.hpp"

namespace mstr {

CharVocabulary::CharVocabulary() {
  lookup_.fill(-1);
  int next = 0;
  for (char c = 'a'; c <= 'z'; ++c) symbols_[next++] = c;
  for (char c = '0'; c <= '9'; ++c) symbols_[next++] = c;
  symbols_[next] = '$';
  // The end-token glyph is not part of the encodable charset.
  for (int i = 0; i < kNumClasses - 1; ++i) {
    lookup_[static_cast<unsigned char>(symbols_[i])] = i;
  }
}

char CharVocabulary::symbol(int index) const {
  if (index < 0 || index >= kNumClasses) {
    throw IndexError("vocabulary index out of range: " + std::to_string(index));
  }
  return symbols_[index];
}

int CharVocabulary::index_of(char glyph) const {
  auto c = static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(glyph)));
  return lookup_[c];
}

const CharVocabulary& build_vocabulary() {
  static const CharVocabulary vocab;
  return vocab;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

LabelSequence encode_label(std::string_view text, const CharVocabulary& vocab) {
  if (static_cast<int>(text.size()) > kMaxTextLen) {
    throw LengthError("label '" + std::string(text) + "' longer than " +
                      std::to_string(kMaxTextLen) + " characters");
  }
  LabelSequence label;
  label.indices.fill(vocab.eos_index());
  for (size_t i = 0; i < text.size(); ++i) {
    int idx = vocab.index_of(text[i]);
    if (idx < 0) {
      throw CharsetError("character '" + std::string(1, text[i]) + "' in '" +
                         std::string(text) + "' is outside the charset");
    }
    label.indices[i] = idx;
  }
  label.true_length = static_cast<int>(text.size()) + 1;
  for (int i = 0; i < kMaxLen; ++i) label.loss_mask[i] = i < label.true_length;
  return label;
}

std::string decode_sequence(std::span<const int64_t> indices, const CharVocabulary& vocab) {
  for (auto idx : indices) {
    if (idx < 0 || idx >= vocab.size()) {
      throw IndexError("vocabulary index out of range: " + std::to_string(idx));
    }
  }
  std::string out;
  for (auto idx : indices) {
    if (idx == vocab.eos_index()) break;
    out.push_back(vocab.symbol(static_cast<int>(idx)));
  }
  return out;
}

}  // namespace mstr
