#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "layersim/tensor.hpp"

namespace layersim::data {

struct Dataset {
  Tensor samples;                    // [N × s × input_dim]
  std::vector<std::size_t> labels;   // N entries, each < classes
  std::size_t classes = 0;
  std::vector<std::size_t> train_indices;  // empty until split()
  std::vector<std::size_t> eval_indices;

  std::size_t size() const { return labels.size(); }
  std::size_t seq_len() const { return samples.dim(1); }
  std::size_t input_dim() const { return samples.dim(2); }
  bool has_split() const { return !train_indices.empty() || !eval_indices.empty(); }
  /// Throws ConfigError when labels or split metadata are inconsistent.
  void validate() const;
};

/// Gaussian class mixture. Each class gets one mean per token position,
/// drawn once from N(0, σ_between²·I); a token is its mean plus N(0, σ_within²·I).
struct MixtureSpec {
  std::size_t classes = 4;
  std::size_t input_dim = 8;
  std::size_t tokens = 4;
  double between_std = 1.0;
  double within_std = 0.5;
  std::size_t per_class = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Balanced mixture; sample j has label j mod K.
Dataset gen_mixture(const MixtureSpec& spec);

/// Class means used by gen_mixture, [K × tokens × input_dim]; same draw order.
Tensor mixture_means(const MixtureSpec& spec);

/// Reads an IDX image/label pair. Unsigned-byte images (magic 0x00000803) are
/// scaled to [0, 1] and cut into non-overlapping patch×patch tiles, one token
/// per tile in row-major tile order. Float64 tensors (magic 0x00000E03,
/// [N × s × input_dim]) are taken as token sequences directly and `patch` is
/// ignored. Labels must be unsigned bytes (0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t patch = 7);

/// Writes `samples` as a float64 IDX tensor (0x00000E03) and labels as 0x00000801.
void write_idx(const Dataset& dataset, const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes unsigned-byte images ([N × rows × cols], values 0..255) and labels.
void write_idx_u8(std::span<const std::uint8_t> pixels, std::size_t count, std::size_t rows, std::size_t cols,
                  std::span<const std::uint8_t> labels, const std::filesystem::path& images,
                  const std::filesystem::path& labels_path);

/// Class-stratified split; each class contributes round(n_c·fraction) eval
/// samples, clamped to [1, n_c − 1]. Indices are returned sorted.
Dataset split(Dataset dataset, double eval_fraction, std::uint64_t seed);

/// Gathers samples into a batch tensor [|indices| × s × input_dim].
Tensor gather(const Dataset& dataset, std::span<const std::size_t> indices);
std::vector<std::size_t> gather_labels(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace layersim::data
