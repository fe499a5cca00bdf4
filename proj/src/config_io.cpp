#include "mstr/config_io.hpp"

#include <set>
#include <string>

#include "mstr/errors.hpp"

namespace mstr {

nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"feature_dim", d.feature_dim}, {"attn_dim", d.attn_dim},
          {"hidden_dim", d.hidden_dim},   {"embed_dim", d.embed_dim},
          {"num_heads", d.num_heads},     {"ffn_dim", d.ffn_dim},
          {"reasoning_layers", d.reasoning_layers}, {"channels_scale", d.channels_scale}};
}

ModelDims dims_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"feature_dim", "attn_dim",  "hidden_dim",
                                              "embed_dim",   "num_heads", "ffn_dim",
                                              "reasoning_layers", "channels_scale"};
  if (!j.is_object()) throw ConfigError("model section must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model key '" + key + "'");
  }
  ModelDims d;
  try {
    d.feature_dim = j.value("feature_dim", d.feature_dim);
    d.attn_dim = j.value("attn_dim", d.attn_dim);
    d.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    d.embed_dim = j.value("embed_dim", d.embed_dim);
    d.num_heads = j.value("num_heads", d.num_heads);
    d.ffn_dim = j.value("ffn_dim", d.ffn_dim);
    d.reasoning_layers = j.value("reasoning_layers", d.reasoning_layers);
    d.channels_scale = j.value("channels_scale", d.channels_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model section: ") + e.what());
  }
  if (d.feature_dim < 1 || d.attn_dim < 1 || d.hidden_dim < 1 || d.embed_dim < 1 ||
      d.ffn_dim < 1 || d.reasoning_layers < 1 || !(d.channels_scale > 0.0)) {
    throw ConfigError("model widths must be positive");
  }
  if (d.num_heads < 1 || d.hidden_dim % d.num_heads != 0) {
    throw ConfigError("num_heads must divide hidden_dim");
  }
  return d;
}

}  // namespace mstr
