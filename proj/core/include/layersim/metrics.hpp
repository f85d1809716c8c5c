#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "layersim/feature_dump.hpp"
#include "layersim/model.hpp"
#include "layersim/tensor.hpp"

namespace layersim::metrics {

enum class Similarity { kCos, kCka };
std::string_view similarity_name(Similarity s);

struct SimilarityMatrix {
  Tensor values;  // (L+1) × (L+1), symmetric, unit diagonal
  Similarity metric = Similarity::kCos;
  std::size_t skipped = 0;  // zero-feature (sample, pair) incidences left out of COS averages
};

struct SaturationProfile {
  std::vector<std::size_t> layer;       // per sample, in [1, L]
  std::vector<std::size_t> counts;      // counts[ℓ], ℓ = 0..L (counts[0] is always 0)
  std::vector<std::size_t> cumulative;  // running sum of counts; cumulative[L] = N
};

/// Subtracts each layer's mean over samples. Throws EmptyInputError when N = 0.
FeatureDump center_features(FeatureDump dump);

/// ⟨a,b⟩/(‖a‖‖b‖), clamped to [−1, 1]. DegenerateError if either is zero.
double cos_pair(std::span<const double> a, std::span<const double> b);

/// Entry (ℓ,ℓ′) is the across-sample mean of cos_pair. Expects a centered dump
/// (see center_features); samples with a zero feature are skipped and counted.
SimilarityMatrix cos_matrix(const FeatureDump& dump);

/// Linear CKA of two banks with samples as columns ([d_a × N], [d_b × N]).
/// Each feature is centered over samples before ‖Za Zbᵀ‖²_F / (‖Za Zaᵀ‖_F ‖Zb Zbᵀ‖_F).
double cka_linear(const Tensor& a, const Tensor& b);
SimilarityMatrix cka_matrix(const FeatureDump& dump);

/// Per-sample COS between adjacent layers: result[ℓ−1] holds COS(h^(ℓ−1), h^(ℓ))
/// for ℓ = 1..L over samples with nonzero features.
std::vector<std::vector<double>> adjacent_cos(const FeatureDump& dump);

/// Per-sample COS of every layer with `target` (typically L).
std::vector<std::vector<double>> cos_to_layer(const FeatureDump& dump, std::size_t target);

/// Acc^(ℓ) for ℓ = 0..L from the dump's classifier on uncentered features.
std::vector<double> layerwise_accuracy(const FeatureDump& dump);

/// Per-sample argmax per layer, [layer][sample].
std::vector<std::vector<std::size_t>> layer_predictions(const FeatureDump& dump);

SaturationProfile saturation_profile(const FeatureDump& dump);

/// Smallest ℓ (1-based over `accs`, which covers layers 1..L) with accs ≥ 1 − ε; L if none.
std::size_t effective_depth(std::span<const double> accs, double epsilon);

/// trace(Σ_W Σ_B†)/K on one layer ([N × d], samples as rows).
double nc1(const Tensor& features, std::span<const std::size_t> labels);

struct Quantiles {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

/// Linear-interpolation quantiles; values need not be sorted. EmptyInputError on empty input.
Quantiles quantiles(std::vector<double> values);

struct NormRatioLayer {
  Quantiles finite;              // over samples with nonzero branch norm (+∞ everywhere if none)
  std::size_t finite_count = 0;
  std::size_t infinite_count = 0;  // branch norm exactly zero
};

/// ‖h^(ℓ−1)‖/‖f_ℓ(h^(ℓ−1))‖ at the readout for blocks ℓ = 1..L (index ℓ−1).
std::vector<NormRatioLayer> norm_ratio_stats(const model::ForwardTrace& trace);

/// [softmax(W h^(ℓ) + b)]_label for ℓ = 0..L.
std::vector<double> predicted_prob_curve(const FeatureDump& dump, std::size_t sample);

}  // namespace layersim::metrics
