#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "layersim/rng.hpp"
#include "layersim/tensor.hpp"

namespace layersim::model {

enum class Arch { kTransformer, kMlpSkip, kMlpNoSkip };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct ModelConfig {
  std::size_t layers = 2;     // L, number of residual blocks
  std::size_t dim = 8;        // d
  std::size_t seq_len = 4;    // s, input tokens per sample (the class token is extra)
  std::size_t input_dim = 4;  // features per input token
  std::size_t heads = 2;
  std::size_t mlp_ratio = 2;
  std::size_t classes = 3;    // K
  Arch arch = Arch::kTransformer;
  bool use_bias = true;       // classifier bias
  double init_std = 0.02;

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
  bool residual() const { return arch != Arch::kMlpNoSkip; }
  std::size_t hidden_dim() const { return mlp_ratio * dim; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One block's weights. Dense weights are stored [out × in]; a layer computes
/// y = x·Wᵀ + b. MLP blocks leave the attention tensors and ln1 empty.
struct Block {
  Tensor ln1_gain, ln1_shift;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_shift;
  Tensor w1, b1, w2, b2;
};

struct Parameters {
  Tensor embed_w, embed_b;
  Tensor cls_token, pos_embed;  // transformer only
  std::vector<Block> blocks;
  Tensor classifier_w, classifier_b;  // bias empty when the classifier has none

  /// Visits every non-empty tensor in a fixed order with a stable name
  /// (e.g. "blocks.1.mlp.fc1.weight"). Checkpoints and the optimizer rely on it.
  template <typename F>
  void for_each(F&& fn);
  template <typename F>
  void for_each(F&& fn) const;

  Parameters zeros_like() const;
  std::size_t count() const;
};

struct Model {
  ModelConfig config;
  Parameters params;
};

/// Closed-form parameter count for an architecture.
std::size_t parameter_count(const ModelConfig& config);

/// Scaled-normal init (std = config.init_std) for dense weights, class token and
/// positional table; biases zero; layer-norm gain 1, shift 0.
Model init_model(const ModelConfig& config, Rng& rng);

namespace detail {

struct BlockCache {
  Tensor input;                          // H^(ℓ-1), [rows × d]
  Tensor ln1_norm, ln1_inv_std;          // x̂ and 1/σ per row
  Tensor q, k, v;                        // [rows × d]
  std::vector<double> attn;              // [n][heads][T][T] attention probabilities
  Tensor attn_concat;                    // head outputs before the output projection
  Tensor mid;                            // H after the attention residual
  Tensor ln2_norm, ln2_inv_std;
  Tensor pre_act, act;                   // MLP hidden before/after GELU
};

struct ForwardCache {
  Tensor tokens;  // transformer: [n·s × input_dim]; MLP: [n × s·input_dim]
  std::vector<BlockCache> blocks;
};

}  // namespace detail

/// Readout-token features for every layer of one batch.
struct ForwardTrace {
  std::size_t samples = 0;
  std::vector<Tensor> features;  // L+1 entries, each [n × d]; features[0] is the embedding output
  std::vector<Tensor> logits;    // L+1 entries, each [n × K]
  std::vector<Tensor> branches;  // L entries; branches[ℓ-1] is block ℓ's residual-branch output at the readout
  std::vector<std::size_t> labels;
  bool residual = true;          // false for mlp_noskip, where a block's output replaces its input
  detail::ForwardCache cache;

  std::size_t layers() const { return features.empty() ? 0 : features.size() - 1; }
};

/// Runs the model on `batch` ([n × s × input_dim]); `labels` may be empty.
ForwardTrace forward_with_trace(const Model& model, const Tensor& batch, std::vector<std::size_t> labels = {});

/// Logits of `features` ([n × d]) under a classifier (bias may be empty).
Tensor apply_classifier(const Tensor& features, const Tensor& weight, const Tensor& bias);

/// Per-sample argmax of layer-ℓ logits, ties to the lowest class.
std::vector<std::size_t> predict(const ForwardTrace& trace, std::size_t layer);

/// Upstream gradients of a scalar loss. Either list may be empty; otherwise it
/// has L+1 entries, each empty or shaped like the matching trace tensor.
struct TraceGradients {
  std::vector<Tensor> logits;    // dLoss/dlogits^(ℓ), flows through the shared classifier
  std::vector<Tensor> features;  // dLoss/dh^(ℓ) applied directly to the readout feature
};

Parameters backward(const Model& model, const ForwardTrace& trace, const TraceGradients& grads);

// --- implementation of the parameter visitor ---

template <typename Self, typename F>
void visit_parameters(Self& p, F&& fn) {
  auto visit = [&](const std::string& name, auto& t) {
    if (!t.empty()) fn(name, t);
  };
  visit("embed.weight", p.embed_w);
  visit("embed.bias", p.embed_b);
  visit("embed.cls_token", p.cls_token);
  visit("embed.pos_embed", p.pos_embed);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    visit(pre + "ln1.gain", b.ln1_gain);
    visit(pre + "ln1.shift", b.ln1_shift);
    visit(pre + "attn.q.weight", b.wq);
    visit(pre + "attn.q.bias", b.bq);
    visit(pre + "attn.k.weight", b.wk);
    visit(pre + "attn.k.bias", b.bk);
    visit(pre + "attn.v.weight", b.wv);
    visit(pre + "attn.v.bias", b.bv);
    visit(pre + "attn.out.weight", b.wo);
    visit(pre + "attn.out.bias", b.bo);
    visit(pre + "ln2.gain", b.ln2_gain);
    visit(pre + "ln2.shift", b.ln2_shift);
    visit(pre + "mlp.fc1.weight", b.w1);
    visit(pre + "mlp.fc1.bias", b.b1);
    visit(pre + "mlp.fc2.weight", b.w2);
    visit(pre + "mlp.fc2.bias", b.b2);
  }
  visit("classifier.weight", p.classifier_w);
  visit("classifier.bias", p.classifier_b);
}

template <typename F>
void Parameters::for_each(F&& fn) {
  visit_parameters(*this, fn);
}

template <typename F>
void Parameters::for_each(F&& fn) const {
  visit_parameters(*this, fn);
}

}  // namespace layersim::model
