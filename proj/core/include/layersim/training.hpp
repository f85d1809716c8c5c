#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layersim/datasets.hpp"
#include "layersim/model.hpp"
#include "layersim/rng.hpp"

namespace layersim::train {

enum class LossMode { kStandard, kAligned, kCeReg, kMultiClassifier };
enum class WeightScheme { kLinear, kUniform };

std::string_view loss_mode_name(LossMode mode);
LossMode parse_loss_mode(std::string_view name);
std::string_view weight_scheme_name(WeightScheme scheme);
WeightScheme parse_weight_scheme(std::string_view name);

struct TrainConfig {
  LossMode loss_mode = LossMode::kStandard;
  WeightScheme weight_scheme = WeightScheme::kLinear;
  bool alternating = false;  // aligned mode only: odd steps final-layer CE, even steps aligned loss
  double beta = 0.1;         // ce_reg coefficient
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.05;
  bool cosine_decay = false;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// λ_1..λ_L: linear λ_ℓ = 2ℓ/(L(L+1)), uniform λ_ℓ = 1/L.
std::vector<double> layer_weights(std::size_t layers, WeightScheme scheme);

/// A scalar loss over one forward pass together with its upstream gradients.
struct LossValue {
  double loss = 0.0;
  model::TraceGradients grads;
};

/// Batch-mean CE of the final layer.
LossValue final_layer_ce(const model::ForwardTrace& trace);
/// Batch mean of Σ_{ℓ=1..L} λ_ℓ·CE(W h^(ℓ), y). `lambda` has L entries.
LossValue aligned_objective(const model::ForwardTrace& trace, std::span<const double> lambda);
/// CE(W h^(L), y) + β Σ_{ℓ=1..L} λ_ℓ (1 − cos(h^(ℓ), h^(L))), batch mean.
LossValue ce_reg_objective(const model::ForwardTrace& trace, double beta, std::span<const double> lambda);

double aligned_loss(const model::ForwardTrace& trace, std::span<const double> lambda);
double ce_reg_loss(const model::ForwardTrace& trace, double beta, WeightScheme scheme = WeightScheme::kLinear);

/// Independent classifiers W^(ℓ), b^(ℓ) for ℓ = 1..L (stored at index ℓ−1).
struct MultiClassifierHead {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;  // entries empty when the model has no classifier bias

  std::size_t layers() const { return weights.size(); }
  std::size_t count() const;
};

MultiClassifierHead init_multi_head(const model::ModelConfig& config, Rng& rng);
/// Every layer's classifier starts as a copy of the model's shared classifier.
MultiClassifierHead multi_head_from_shared(const model::Model& model);

struct MultiLossValue {
  double loss = 0.0;
  model::TraceGradients grads;  // feature gradients only
  MultiClassifierHead head_grads;
};

/// Batch mean of Σ_ℓ λ_ℓ·CE(W^(ℓ) h^(ℓ), y).
MultiLossValue multi_classifier_objective(const model::ForwardTrace& trace, const MultiClassifierHead& head,
                                          std::span<const double> lambda);

/// Which objective a given 1-based optimizer step uses.
enum class StepObjective { kFinalCe, kAligned, kCeReg, kMulti };
StepObjective objective_for_step(const TrainConfig& config, std::size_t step);

/// AdamW with decoupled weight decay, p ← p − lr·(m̂/(√v̂+ε) + wd·p).
/// Decay applies to rank-2 weights only; biases, norms and token tables are exempt.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// `params[i]` is updated from `grads[i]`; the slot order must be the same on every call.
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, double lr, double weight_decay);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;       // cumulative optimizer steps
  double mean_loss = 0.0;      // mean of the per-step objective values
  double accuracy = 0.0;       // final-layer accuracy over the epoch's training batches
  double wall_seconds = 0.0;
};

struct TrainResult {
  model::Model model;
  std::vector<EpochLog> log;
};

struct MultiTrainResult {
  model::Model model;
  MultiClassifierHead head;
  std::vector<EpochLog> log;
};

/// Called with the 1-based step index and the objective just applied.
using StepObserver = std::function<void(std::size_t, StepObjective)>;

/// Trains on dataset.train_indices (all samples when unsplit). `rng` drives
/// the per-epoch shuffles. Throws TrainingError on a non-finite loss.
TrainResult train(model::Model model, const data::Dataset& dataset, const TrainConfig& config, Rng& rng,
                  const StepObserver& observer = {});

/// Multi-exit baseline: layer ℓ uses its own classifier; the shared classifier is not touched.
MultiTrainResult train_multi_classifier(model::Model model, MultiClassifierHead head, const data::Dataset& dataset,
                                        const TrainConfig& config, Rng& rng);

/// CSV: comment lines from `header`, then epoch,steps,mean_loss,final_layer_accuracy,wall_seconds.
void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log, const std::vector<std::string>& header = {});

}  // namespace layersim::train
