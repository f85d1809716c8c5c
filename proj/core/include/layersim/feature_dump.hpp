#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "layersim/datasets.hpp"
#include "layersim/model.hpp"
#include "layersim/tensor.hpp"

namespace layersim {

/// Readout features of N samples at every layer 0..L, plus the classifier
/// that produced the model's predictions.
struct FeatureDump {
  Tensor features;                  // [(L+1) × N × d], ordered [layer][sample][dim]
  std::vector<std::size_t> labels;  // N entries
  std::size_t classes = 0;
  Tensor classifier_w;              // [K × d]
  Tensor classifier_b;              // [K] or empty

  std::size_t layer_count() const { return features.dim(0); }  // L + 1
  std::size_t layers() const { return features.dim(0) - 1; }    // L
  std::size_t samples() const { return features.dim(1); }
  std::size_t dim() const { return features.dim(2); }
  bool has_classifier() const { return !classifier_w.empty(); }

  std::span<const double> feature(std::size_t layer, std::size_t sample) const;
  std::span<double> feature(std::size_t layer, std::size_t sample);
  /// Copy of one layer as [N × d].
  Tensor layer(std::size_t l) const;
  /// Classifier logits of one feature vector.
  std::vector<double> logits(std::size_t layer, std::size_t sample) const;

  void validate() const;
  friend bool operator==(const FeatureDump&, const FeatureDump&) = default;
};

/// Builds a dump by running `model` over `indices` of `dataset` in batches.
FeatureDump dump_features(const model::Model& model, const data::Dataset& dataset,
                          std::span<const std::size_t> indices, std::size_t batch_size = 256);

/// Builds a dump from a single trace.
FeatureDump dump_from_trace(const model::ForwardTrace& trace, const Tensor& classifier_w, const Tensor& classifier_b,
                            std::size_t classes);

/// RSDF wire format, all integers little-endian u32:
///   "RSDF" | version=1 | N | L+1 | d | K | bias-flag | N labels |
///   K·d f64 weights | (K f64 bias if flagged) | (L+1)·N·d f64 features.
void write_dump(std::ostream& out, const FeatureDump& dump);
void write_dump(const std::filesystem::path& path, const FeatureDump& dump);
FeatureDump read_dump(std::istream& in);
FeatureDump read_dump(const std::filesystem::path& path);

}  // namespace layersim
