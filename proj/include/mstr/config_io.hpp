#pragma once

#include <nlohmann/json.hpp>

#include "mstr/dims.hpp"

namespace mstr {

nlohmann::json dims_to_json(const ModelDims& dims);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
ModelDims dims_from_json(const nlohmann::json& j);

}  // namespace mstr
