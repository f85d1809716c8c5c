#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "layersim/config_json.hpp"
#include "layersim/model.hpp"

namespace layersim {

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  model::Model model;
  std::vector<NamedTensor> extras;  // e.g. per-layer classifier heads
  Json meta;
};

/// Writes `<manifest>` (JSON: config, meta, and one entry per tensor with
/// name, shape, byte offset and element count) and its float64 little-endian
/// blob next to it with the extension replaced by ".bin".
void save_checkpoint(const std::filesystem::path& manifest, const model::Model& model,
                     const std::vector<NamedTensor>& extras = {}, const Json& meta = Json::object());

/// Reads a checkpoint; every model parameter must be present with the shape
/// its config implies. Throws FormatError on any inconsistency.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

}  // namespace layersim
