#pragma once

#include <cstdint>

namespace mstr {

/// Layer widths of the recognizer. Defaults are the published sizes; tests and
/// desk-scale training runs shrink them.
struct ModelDims {
  int64_t feature_dim = 256;    // channels of every pyramid level
  int64_t attn_dim = 128;       // 2D attention hidden width
  int64_t hidden_dim = 256;     // decoder LSTM, BiLSTM per direction, reasoning width
  int64_t embed_dim = 128;      // character embedding
  int64_t num_heads = 4;
  int64_t ffn_dim = 1024;
  int64_t reasoning_layers = 2;
  double channels_scale = 1.0;  // backbone internal widths only

  int64_t joint_dim() const { return 2 * hidden_dim; }
  int64_t later_query_dim() const { return joint_dim() + hidden_dim; }
  int64_t later_input_dim() const { return embed_dim + feature_dim + joint_dim(); }
  int64_t stage0_input_dim() const { return embed_dim + feature_dim; }
};

}  // namespace mstr
