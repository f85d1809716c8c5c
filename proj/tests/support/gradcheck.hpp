#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "layersim/numerics.hpp"
#include "layersim/training.hpp"
#include "test_support.hpp"

namespace testsupport {

using namespace layersim;

enum class Mode { kStandard, kAlignedLinear, kAlignedUniform, kCeReg, kMulti };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kStandard: return "standard";
    case Mode::kAlignedLinear: return "aligned/linear";
    case Mode::kAlignedUniform: return "aligned/uniform";
    case Mode::kCeReg: return "ce_reg";
    case Mode::kMulti: return "multi_classifier";
  }
  return "?";
}

struct Evaluated {
  double loss = 0.0;
  std::map<std::string, Tensor> grads;
};

// Parameters trainable under `mode` are addressed by name; head tensors use
// "head.<l>.weight" / "head.<l>.bias".
inline Evaluated evaluate(Mode mode, const model::Model& m, const train::MultiClassifierHead& head, const Tensor& batch,
                   const std::vector<std::size_t>& labels, bool want_grads) {
  const auto trace = model::forward_with_trace(m, batch, labels);
  const std::size_t L = m.config.layers;
  Evaluated out;
  model::TraceGradients tg;
  train::MultiClassifierHead head_grads;
  switch (mode) {
    case Mode::kStandard: {
      auto v = train::final_layer_ce(trace);
      out.loss = v.loss;
      tg = std::move(v.grads);
      break;
    }
    case Mode::kAlignedLinear:
    case Mode::kAlignedUniform: {
      const auto lambda = train::layer_weights(
          L, mode == Mode::kAlignedLinear ? train::WeightScheme::kLinear : train::WeightScheme::kUniform);
      auto v = train::aligned_objective(trace, lambda);
      out.loss = v.loss;
      tg = std::move(v.grads);
      break;
    }
    case Mode::kCeReg: {
      const auto lambda = train::layer_weights(L, train::WeightScheme::kLinear);
      auto v = train::ce_reg_objective(trace, 0.7, lambda);
      out.loss = v.loss;
      tg = std::move(v.grads);
      break;
    }
    case Mode::kMulti: {
      const auto lambda = train::layer_weights(L, train::WeightScheme::kLinear);
      auto v = train::multi_classifier_objective(trace, head, lambda);
      out.loss = v.loss;
      tg = std::move(v.grads);
      head_grads = std::move(v.head_grads);
      break;
    }
  }
  if (!want_grads) return out;
  const auto g = model::backward(m, trace, tg);
  g.for_each([&](const std::string& name, const Tensor& t) {
    if (mode == Mode::kMulti && name.rfind("classifier.", 0) == 0) return;
    out.grads.emplace(name, t);
  });
  if (mode == Mode::kMulti) {
    for (std::size_t l = 0; l < head_grads.layers(); ++l) {
      out.grads.emplace("head." + std::to_string(l) + ".weight", head_grads.weights[l]);
      if (!head_grads.biases[l].empty()) out.grads.emplace("head." + std::to_string(l) + ".bias", head_grads.biases[l]);
    }
  }
  return out;
}

inline Tensor* locate(const std::string& name, model::Model& m, train::MultiClassifierHead& head) {
  if (name.rfind("head.", 0) == 0) {
    const auto dot = name.find('.', 5);
    const auto l = std::stoul(name.substr(5, dot - 5));
    return name.ends_with(".weight") ? &head.weights[l] : &head.biases[l];
  }
  Tensor* found = nullptr;
  m.params.for_each([&](const std::string& n, Tensor& t) {
    if (n == name) found = &t;
  });
  return found;
}

struct GradReport {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

/// Worst max_relative_error over every trainable tensor, against a five-point
/// finite-difference stencil.
inline GradReport gradient_check(model::Arch arch, Mode mode, bool bias) {
  Rng rng(1234);
  const auto cfg = testsupport::tiny_config(arch, bias);
  auto m = model::init_model(cfg, rng);
  auto head = train::init_multi_head(cfg, rng);
  // Nonzero biases and shifts so every path carries gradient.
  m.params.for_each([&](const std::string&, Tensor& t) {
    for (auto& v : t.data()) v += 0.1 * rng.normal();
  });
  const auto batch = testsupport::random_batch(cfg, 4, rng);
  const auto labels = testsupport::cyclic_labels(4, cfg.classes);

  const auto analytic = evaluate(mode, m, head, batch, labels, true);
  std::size_t checked = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, grad] : analytic.grads) {
    Tensor* p = locate(name, m, head);
    if (p == nullptr) throw std::logic_error("no parameter named " + name);
    Tensor numeric(grad.shape());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = (*p)[i];
      numeric[i] = derivative(
          [&](double x) {
            (*p)[i] = x;
            return evaluate(mode, m, head, batch, labels, false).loss;
          },
          saved, 1e-3);
      (*p)[i] = saved;
    }
    const double err = max_relative_error(grad, numeric, 1e-8);
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    checked += grad.size();
  }
  return {worst, worst_name, checked};
}

}  // namespace testsupport

