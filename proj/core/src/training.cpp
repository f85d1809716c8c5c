#include "layersim/training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"
#include "layersim/report.hpp"

namespace layersim::train {

using model::ForwardTrace;
using model::TraceGradients;

std::string_view loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::kStandard: return "standard";
    case LossMode::kAligned: return "aligned";
    case LossMode::kCeReg: return "ce_reg";
    case LossMode::kMultiClassifier: return "multi_classifier";
  }
  return "unknown";
}

LossMode parse_loss_mode(std::string_view name) {
  if (name == "standard") return LossMode::kStandard;
  if (name == "aligned") return LossMode::kAligned;
  if (name == "ce_reg") return LossMode::kCeReg;
  if (name == "multi_classifier") return LossMode::kMultiClassifier;
  throw ConfigError("unknown loss_mode '" + std::string(name) + "'");
}

std::string_view weight_scheme_name(WeightScheme scheme) {
  return scheme == WeightScheme::kLinear ? "linear" : "uniform";
}

WeightScheme parse_weight_scheme(std::string_view name) {
  if (name == "linear") return WeightScheme::kLinear;
  if (name == "uniform") return WeightScheme::kUniform;
  throw ConfigError("unknown weight_scheme '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("train.beta must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
}

std::vector<double> layer_weights(std::size_t layers, WeightScheme scheme) {
  if (layers < 1) throw ConfigError("layer_weights: need at least one layer");
  std::vector<double> w(layers);
  const double L = static_cast<double>(layers);
  for (std::size_t l = 1; l <= layers; ++l) {
    w[l - 1] = scheme == WeightScheme::kLinear ? 2.0 * static_cast<double>(l) / (L * (L + 1.0)) : 1.0 / L;
  }
  return w;
}

namespace {

/// Adds weight·CE(logits, labels)/n to `loss` and writes weight·(p − onehot)/n into `grad`.
double weighted_ce(const Tensor& logits, const std::vector<std::size_t>& labels, double weight, Tensor& grad) {
  const std::size_t n = logits.rows();
  const double scale = weight / static_cast<double>(n);
  grad = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += cross_entropy(logits.row(i), labels[i]);
    const auto g = cross_entropy_grad(logits.row(i), labels[i]);
    auto dst = grad.row(i);
    for (std::size_t c = 0; c < g.size(); ++c) dst[c] = scale * g[c];
  }
  return scale * total;
}

void require_labels(const ForwardTrace& trace) {
  if (trace.labels.size() != trace.samples || trace.samples == 0) {
    throw ConfigError("loss requires one label per sample in the trace");
  }
}

}  // namespace

LossValue final_layer_ce(const ForwardTrace& trace) {
  require_labels(trace);
  const std::size_t L = trace.layers();
  LossValue out;
  out.grads.logits.resize(L + 1);
  out.loss = weighted_ce(trace.logits[L], trace.labels, 1.0, out.grads.logits[L]);
  return out;
}

LossValue aligned_objective(const ForwardTrace& trace, std::span<const double> lambda) {
  require_labels(trace);
  const std::size_t L = trace.layers();
  if (lambda.size() != L) {
    throw ConfigError("aligned loss: expected " + std::to_string(L) + " layer weights, got " +
                      std::to_string(lambda.size()));
  }
  LossValue out;
  out.grads.logits.resize(L + 1);
  for (std::size_t l = 1; l <= L; ++l) {
    out.loss += weighted_ce(trace.logits[l], trace.labels, lambda[l - 1], out.grads.logits[l]);
  }
  return out;
}

LossValue ce_reg_objective(const ForwardTrace& trace, double beta, std::span<const double> lambda) {
  if (!(beta >= 0.0)) throw ConfigError("ce_reg: beta must be >= 0");
  LossValue out = final_layer_ce(trace);
  const std::size_t L = trace.layers(), n = trace.samples;
  if (lambda.size() != L) throw ConfigError("ce_reg: expected one weight per layer");
  if (beta == 0.0) return out;
  const Tensor& last = trace.features[L];
  const std::size_t d = last.cols();
  out.grads.features.assign(L + 1, Tensor());
  Tensor& g_last = out.grads.features[L] = Tensor({n, d});
  // The ℓ = L term is identically zero with zero gradient.
  for (std::size_t l = 1; l < L; ++l) {
    const Tensor& h = trace.features[l];
    Tensor& g = out.grads.features[l] = Tensor({n, d});
    const double coef = beta * lambda[l - 1] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto a = h.row(i);
      auto b = last.row(i);
      const double na = norm2(a), nb = norm2(b);
      if (na == 0.0 || nb == 0.0) continue;  // cosine undefined; the sample contributes no penalty
      const double c = dot(a, b) / (na * nb);
      out.loss += coef * (1.0 - c);
      auto ga = g.row(i);
      auto gb = g_last.row(i);
      for (std::size_t k = 0; k < d; ++k) {
        ga[k] -= coef * (b[k] / (na * nb) - c * a[k] / (na * na));
        gb[k] -= coef * (a[k] / (na * nb) - c * b[k] / (nb * nb));
      }
    }
  }
  return out;
}

double aligned_loss(const ForwardTrace& trace, std::span<const double> lambda) {
  return aligned_objective(trace, lambda).loss;
}

double ce_reg_loss(const ForwardTrace& trace, double beta, WeightScheme scheme) {
  return ce_reg_objective(trace, beta, layer_weights(trace.layers(), scheme)).loss;
}

std::size_t MultiClassifierHead::count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

MultiClassifierHead init_multi_head(const model::ModelConfig& config, Rng& rng) {
  config.validate();
  MultiClassifierHead head;
  for (std::size_t l = 0; l < config.layers; ++l) {
    head.weights.push_back(random_normal({config.classes, config.dim}, config.init_std, rng));
    head.biases.push_back(config.use_bias ? Tensor({config.classes}) : Tensor());
  }
  return head;
}

MultiClassifierHead multi_head_from_shared(const model::Model& model) {
  MultiClassifierHead head;
  for (std::size_t l = 0; l < model.config.layers; ++l) {
    head.weights.push_back(model.params.classifier_w);
    head.biases.push_back(model.params.classifier_b);
  }
  return head;
}

MultiLossValue multi_classifier_objective(const ForwardTrace& trace, const MultiClassifierHead& head,
                                          std::span<const double> lambda) {
  require_labels(trace);
  const std::size_t L = trace.layers();
  if (head.layers() != L || lambda.size() != L) throw ConfigError("multi-classifier head does not match depth");
  MultiLossValue out;
  out.grads.features.assign(L + 1, Tensor());
  out.head_grads.weights.resize(L);
  out.head_grads.biases.resize(L);
  for (std::size_t l = 1; l <= L; ++l) {
    const Tensor& w = head.weights[l - 1];
    const Tensor& b = head.biases[l - 1];
    const Tensor logits = model::apply_classifier(trace.features[l], w, b);
    Tensor dlogits;
    out.loss += weighted_ce(logits, trace.labels, lambda[l - 1], dlogits);
    Tensor gw(w.shape());
    matmul_at_acc(dlogits, trace.features[l], gw);
    Tensor gb = b.empty() ? Tensor() : Tensor(b.shape());
    if (!b.empty())
      for (std::size_t i = 0; i < dlogits.rows(); ++i)
        for (std::size_t c = 0; c < dlogits.cols(); ++c) gb[c] += dlogits(i, c);
    out.grads.features[l] = matmul(dlogits, w);
    out.head_grads.weights[l - 1] = std::move(gw);
    out.head_grads.biases[l - 1] = std::move(gb);
  }
  return out;
}

StepObjective objective_for_step(const TrainConfig& config, std::size_t step) {
  switch (config.loss_mode) {
    case LossMode::kStandard: return StepObjective::kFinalCe;
    case LossMode::kAligned:
      if (config.alternating) return step % 2 == 1 ? StepObjective::kFinalCe : StepObjective::kAligned;
      return StepObjective::kAligned;
    case LossMode::kCeReg: return StepObjective::kCeReg;
    case LossMode::kMultiClassifier: return StepObjective::kMulti;
  }
  return StepObjective::kFinalCe;
}

void AdamW::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, double lr,
                 double weight_decay) {
  if (params.size() != grads.size()) throw DimensionError("AdamW: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw DimensionError("AdamW: slot count changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto p = params[s]->data();
    auto g = grads[s]->data();
    if (p.size() != g.size() || p.size() != m_[s].size()) throw DimensionError("AdamW: slot shape changed");
    const double decay = params[s]->rank() == 2 ? weight_decay : 0.0;
    auto& m = m_[s];
    auto& v = v_[s];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + decay * p[i]);
    }
  }
}

namespace {

struct Slots {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> grads;
};

std::vector<std::size_t> training_indices(const data::Dataset& ds) {
  if (!ds.train_indices.empty()) return ds.train_indices;
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

double lr_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (!cfg.cosine_decay || total_steps <= 1) return cfg.lr;
  const double progress = static_cast<double>(step - 1) / static_cast<double>(total_steps - 1);
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void check_compatible(const model::Model& m, const data::Dataset& ds) {
  if (ds.seq_len() != m.config.seq_len || ds.input_dim() != m.config.input_dim) {
    throw DimensionError("dataset tokens [" + std::to_string(ds.seq_len()) + " x " + std::to_string(ds.input_dim()) +
                         "] do not match model input [" + std::to_string(m.config.seq_len) + " x " +
                         std::to_string(m.config.input_dim) + "]");
  }
  if (ds.classes > m.config.classes) throw DimensionError("dataset has more classes than the model");
}

/// The shared epoch/batch loop. `run_step` performs one forward/backward/update
/// and returns (loss, correct predictions at the final layer).
template <typename StepFn>
std::vector<EpochLog> run_epochs(const data::Dataset& dataset, const TrainConfig& config, Rng& rng,
                                 StepFn&& run_step) {
  auto indices = training_indices(dataset);
  const std::size_t batches = (indices.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  std::vector<EpochLog> log;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(indices);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      ++step;
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(indices.size(), lo + config.batch_size);
      const std::span<const std::size_t> batch_idx(indices.data() + lo, hi - lo);
      const Tensor batch = data::gather(dataset, batch_idx);
      auto labels = data::gather_labels(dataset, batch_idx);
      const auto [loss, hits] = run_step(step, batch, std::move(labels), lr_at(config, step, total_steps));
      if (!std::isfinite(loss)) {
        throw TrainingError(step, "non-finite loss at step " + std::to_string(step) + " (epoch " +
                                      std::to_string(epoch) + ")");
      }
      loss_sum += loss;
      correct += hits;
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    log.push_back({epoch, step, loss_sum / static_cast<double>(batches),
                   static_cast<double>(correct) / static_cast<double>(indices.size()), elapsed.count()});
  }
  return log;
}

std::size_t count_hits(const Tensor& logits, const std::vector<std::size_t>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) hits += argmax(logits.row(i)) == labels[i];
  return hits;
}

}  // namespace

TrainResult train(model::Model model, const data::Dataset& dataset, const TrainConfig& config, Rng& rng,
                  const StepObserver& observer) {
  config.validate();
  check_compatible(model, dataset);
  if (config.loss_mode == LossMode::kMultiClassifier) {
    throw ConfigError("multi_classifier mode needs a head; use train_multi_classifier");
  }
  const auto lambda = layer_weights(model.config.layers, config.weight_scheme);
  AdamW opt;
  Slots slots;
  model.params.for_each([&](const std::string&, Tensor& t) { slots.params.push_back(&t); });

  auto step_fn = [&](std::size_t step, const Tensor& batch, std::vector<std::size_t> labels, double lr) {
    const auto objective = objective_for_step(config, step);
    const ForwardTrace trace = model::forward_with_trace(model, batch, std::move(labels));
    LossValue lv;
    switch (objective) {
      case StepObjective::kFinalCe: lv = final_layer_ce(trace); break;
      case StepObjective::kAligned: lv = aligned_objective(trace, lambda); break;
      case StepObjective::kCeReg: lv = ce_reg_objective(trace, config.beta, lambda); break;
      case StepObjective::kMulti: break;
    }
    const std::size_t hits = count_hits(trace.logits.back(), trace.labels);
    if (!std::isfinite(lv.loss)) return std::pair{lv.loss, hits};
    const model::Parameters grads = model::backward(model, trace, lv.grads);
    std::vector<const Tensor*> gptr;
    grads.for_each([&](const std::string&, const Tensor& t) { gptr.push_back(&t); });
    opt.step(slots.params, gptr, lr, config.weight_decay);
    if (observer) observer(step, objective);
    return std::pair{lv.loss, hits};
  };
  auto log = run_epochs(dataset, config, rng, step_fn);
  return {std::move(model), std::move(log)};
}

MultiTrainResult train_multi_classifier(model::Model model, MultiClassifierHead head, const data::Dataset& dataset,
                                        const TrainConfig& config, Rng& rng) {
  config.validate();
  check_compatible(model, dataset);
  if (head.layers() != model.config.layers) throw ConfigError("multi-classifier head depth does not match model");
  const auto lambda = layer_weights(model.config.layers, config.weight_scheme);
  AdamW opt;
  std::vector<Tensor*> params;
  // The shared classifier is excluded so it stays bit-identical.
  model.params.for_each([&](const std::string& name, Tensor& t) {
    if (!name.starts_with("classifier.")) params.push_back(&t);
  });
  for (std::size_t l = 0; l < head.layers(); ++l) {
    params.push_back(&head.weights[l]);
    if (!head.biases[l].empty()) params.push_back(&head.biases[l]);
  }

  auto step_fn = [&](std::size_t, const Tensor& batch, std::vector<std::size_t> labels, double lr) {
    const ForwardTrace trace = model::forward_with_trace(model, batch, std::move(labels));
    MultiLossValue lv = multi_classifier_objective(trace, head, lambda);
    const Tensor last_logits =
        model::apply_classifier(trace.features.back(), head.weights.back(), head.biases.back());
    const std::size_t hits = count_hits(last_logits, trace.labels);
    if (!std::isfinite(lv.loss)) return std::pair{lv.loss, hits};
    const model::Parameters grads = model::backward(model, trace, lv.grads);
    std::vector<const Tensor*> gptr;
    grads.for_each([&](const std::string& name, const Tensor& t) {
      if (!name.starts_with("classifier.")) gptr.push_back(&t);
    });
    for (std::size_t l = 0; l < head.layers(); ++l) {
      gptr.push_back(&lv.head_grads.weights[l]);
      if (!lv.head_grads.biases[l].empty()) gptr.push_back(&lv.head_grads.biases[l]);
    }
    opt.step(params, gptr, lr, config.weight_decay);
    return std::pair{lv.loss, hits};
  };
  auto log = run_epochs(dataset, config, rng, step_fn);
  return {std::move(model), std::move(head), std::move(log)};
}

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log, const std::vector<std::string>& header) {
  for (const auto& h : header) out << "# " << h << "\n";
  out << "epoch,steps,mean_loss,final_layer_accuracy,wall_seconds\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.steps << ',' << format_double(e.mean_loss) << ',' << format_double(e.accuracy) << ','
        << std::setprecision(6) << e.wall_seconds << "\n";
  }
}

}  // namespace layersim::train
