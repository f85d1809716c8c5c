#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "layersim/datasets.hpp"
#include "layersim/model.hpp"
#include "layersim/training.hpp"

namespace layersim {

using Json = nlohmann::json;

// Strict JSON mapping: unknown keys and wrong types raise ConfigError naming
// the offending key. Missing keys keep their defaults.

Json to_json(const model::ModelConfig& c);
Json to_json(const train::TrainConfig& c);
Json to_json(const data::MixtureSpec& s);

model::ModelConfig model_config_from_json(const Json& j);
train::TrainConfig train_config_from_json(const Json& j);
data::MixtureSpec mixture_spec_from_json(const Json& j);

/// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void require_known_keys(const Json& j, std::string_view context, std::initializer_list<std::string_view> allowed);

/// FNV-1a 64 of arbitrary bytes, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// FNV-1a 64 over the compact serialization (object keys are sorted), hex-encoded.
std::string config_hash(const Json& j);

}  // namespace layersim
