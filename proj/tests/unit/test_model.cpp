#include <doctest.h>

#include <cmath>

#include "layersim/error.hpp"
#include "layersim/model.hpp"
#include "layersim/numerics.hpp"
#include "layersim/training.hpp"
#include "test_support.hpp"

using namespace layersim;
using model::Arch;

namespace {

// Hand count per matrix, independent of parameter_count.
std::size_t hand_count(const model::ModelConfig& c) {
  const std::size_t d = c.dim, h = c.hidden_dim();
  std::size_t n = 0;
  if (c.arch == Arch::kTransformer) {
    n += d * c.input_dim + d;       // token embedding
    n += d;                         // class token
    n += (c.seq_len + 1) * d;       // positions
    n += c.layers * (2 * d            // ln1
                     + 4 * (d * d + d)  // q, k, v, out
                     + 2 * d            // ln2
                     + h * d + h + d * h + d);
  } else {
    n += d * c.seq_len * c.input_dim + d;
    n += c.layers * (2 * d + h * d + h + d * h + d);
  }
  n += c.classes * d + (c.use_bias ? c.classes : 0);
  return n;
}

void zero_blocks(model::Model& m) {
  for (auto& b : m.params.blocks) {
    for (Tensor* t : {&b.ln1_gain, &b.ln1_shift, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo,
                      &b.ln2_gain, &b.ln2_shift, &b.w1, &b.b1, &b.w2, &b.b2}) {
      if (!t->empty()) t->fill(0.0);
    }
  }
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("parameter count matches the closed form for every architecture") {
    for (auto arch : {Arch::kTransformer, Arch::kMlpSkip, Arch::kMlpNoSkip}) {
      for (bool bias : {true, false}) {
        auto cfg = testsupport::tiny_config(arch, bias);
        cfg.classes = 3;
        Rng rng(1);
        const auto m = model::init_model(cfg, rng);
        CHECK(m.params.count() == hand_count(cfg));
        CHECK(model::parameter_count(cfg) == hand_count(cfg));
      }
    }
  }

  TEST_CASE("init is deterministic") {
    const auto cfg = testsupport::tiny_config(Arch::kTransformer);
    Rng a(5), b(5);
    const auto ma = model::init_model(cfg, a);
    const auto mb = model::init_model(cfg, b);
    bool same = true;
    std::vector<Tensor> ta, tb;
    ma.params.for_each([&](const std::string&, const Tensor& t) { ta.push_back(t); });
    mb.params.for_each([&](const std::string&, const Tensor& t) { tb.push_back(t); });
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) same &= ta[i] == tb[i];
    CHECK(same);
  }

  TEST_CASE("config validation") {
    auto cfg = testsupport::tiny_config(Arch::kTransformer);
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = testsupport::tiny_config(Arch::kTransformer);
    cfg.layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(model::parse_arch("resnet"), ConfigError);
  }

  TEST_CASE("zeroed residual blocks leave features unchanged across layers") {
    for (auto arch : {Arch::kTransformer, Arch::kMlpSkip}) {
      const auto cfg = testsupport::tiny_config(arch);
      Rng rng(2);
      auto m = model::init_model(cfg, rng);
      zero_blocks(m);
      const auto trace = model::forward_with_trace(m, testsupport::random_batch(cfg, 5, rng));
      for (std::size_t l = 1; l <= cfg.layers; ++l) CHECK(trace.features[l] == trace.features[0]);
    }
  }

  TEST_CASE("mlp_noskip with zero weights outputs the block offset") {
    const auto cfg = testsupport::tiny_config(Arch::kMlpNoSkip);
    Rng rng(3);
    auto m = model::init_model(cfg, rng);
    zero_blocks(m);
    for (auto& b : m.params.blocks)
      for (auto& v : b.b2.data()) v = rng.normal();
    const auto trace = model::forward_with_trace(m, testsupport::random_batch(cfg, 4, rng));
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < cfg.dim; ++c) CHECK(trace.features[l](i, c) == m.params.blocks[l - 1].b2[c]);
      }
    }
  }

  TEST_CASE("trace logits equal the classifier applied to each layer's feature") {
    for (auto arch : {Arch::kTransformer, Arch::kMlpSkip, Arch::kMlpNoSkip}) {
      const auto cfg = testsupport::tiny_config(arch);
      Rng rng(4);
      auto m = model::init_model(cfg, rng);
      for (auto& v : m.params.classifier_b.data()) v = rng.normal();
      const auto trace = model::forward_with_trace(m, testsupport::random_batch(cfg, 6, rng));
      REQUIRE(trace.features.size() == cfg.layers + 1);
      REQUIRE(trace.logits.size() == cfg.layers + 1);
      for (std::size_t l = 0; l <= cfg.layers; ++l) {
        for (std::size_t i = 0; i < 6; ++i) {
          for (std::size_t k = 0; k < cfg.classes; ++k) {
            double s = 0.0;
            for (std::size_t c = 0; c < cfg.dim; ++c) s += m.params.classifier_w(k, c) * trace.features[l](i, c);
            s += m.params.classifier_b[k];
            CHECK(trace.logits[l](i, k) == s);
          }
        }
      }
    }
  }

  TEST_CASE("predict takes the argmax with ties to class 0") {
    model::ForwardTrace t;
    t.samples = 2;
    t.features = {Tensor({2, 1}), Tensor({2, 1})};
    t.logits = {Tensor({2, 3}), Tensor::matrix({{0.1, 0.9, 0.3}, {0.5, 0.5, 0.1}})};
    const auto p = model::predict(t, 1);
    CHECK(p[0] == 1);
    CHECK(p[1] == 0);
    CHECK_THROWS_AS(model::predict(t, 2), IndexError);
  }

  TEST_CASE("predictions equal the argmax of softmax probabilities") {
    const auto cfg = testsupport::tiny_config(Arch::kTransformer);
    Rng rng(6);
    const auto m = model::init_model(cfg, rng);
    const auto trace = model::forward_with_trace(m, testsupport::random_batch(cfg, 20, rng));
    for (std::size_t l = 0; l <= cfg.layers; ++l) {
      const auto p = model::predict(trace, l);
      for (std::size_t i = 0; i < 20; ++i) {
        const auto probs = softmax(trace.logits[l].row(i));
        std::size_t best = 0;
        for (std::size_t k = 1; k < probs.size(); ++k)
          if (probs[k] > probs[best]) best = k;
        CHECK(p[i] == best);
      }
    }
  }

  TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    const auto cfg = testsupport::tiny_config(Arch::kTransformer);
    Rng rng(7);
    const auto m = model::init_model(cfg, rng);
    const auto trace = model::forward_with_trace(m, testsupport::random_batch(cfg, 3, rng));
    model::TraceGradients g;
    for (std::size_t l = 0; l <= cfg.layers; ++l) g.logits.push_back(Tensor(trace.logits[l].shape()));
    const auto grads = model::backward(m, trace, g);
    grads.for_each([&](const std::string& name, const Tensor& t) {
      INFO(name);
      CHECK(frobenius_norm(t) == 0.0);
    });
  }

  TEST_CASE("aligned gradient is the λ-weighted sum of per-layer CE gradients") {
    const auto cfg = testsupport::tiny_config(Arch::kTransformer);
    Rng rng(8);
    const auto m = model::init_model(cfg, rng);
    const auto batch = testsupport::random_batch(cfg, 4, rng);
    const auto labels = testsupport::cyclic_labels(4, cfg.classes);
    const auto trace = model::forward_with_trace(m, batch, labels);
    const auto lambda = train::layer_weights(cfg.layers, train::WeightScheme::kLinear);
    const auto aligned = model::backward(m, trace, train::aligned_objective(trace, lambda).grads);

    auto summed = m.params.zeros_like();
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      model::TraceGradients g;
      g.logits.resize(cfg.layers + 1);
      Tensor dl(trace.logits[l].shape());
      for (std::size_t i = 0; i < 4; ++i) {
        const auto ce = cross_entropy_grad(trace.logits[l].row(i), labels[i]);
        for (std::size_t k = 0; k < cfg.classes; ++k) dl(i, k) = ce[k] / 4.0;
      }
      g.logits[l] = dl;
      auto part = model::backward(m, trace, g);
      std::vector<Tensor*> dst;
      summed.for_each([&](const std::string&, Tensor& t) { dst.push_back(&t); });
      std::size_t idx = 0;
      part.for_each([&](const std::string&, const Tensor& t) {
        add_inplace(*dst[idx++], scaled(t, lambda[l - 1]));
      });
    }
    std::vector<const Tensor*> a, b;
    aligned.for_each([&](const std::string&, const Tensor& t) { a.push_back(&t); });
    summed.for_each([&](const std::string&, const Tensor& t) { b.push_back(&t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(*a[i], *b[i]) < 1e-13);
  }

  TEST_CASE("single-layer model CE gradient matches finite differences") {
    auto cfg = testsupport::tiny_config(Arch::kMlpSkip);
    cfg.layers = 1;
    Rng rng(9);
    auto m = model::init_model(cfg, rng);
    const auto batch = testsupport::random_batch(cfg, 3, rng);
    const auto labels = testsupport::cyclic_labels(3, cfg.classes);
    const auto trace = model::forward_with_trace(m, batch, labels);
    const auto g = model::backward(m, trace, train::final_layer_ce(trace).grads);
    Tensor& w = m.params.blocks[0].w1;
    auto f = [&](const Tensor& x) {
      const Tensor saved = w;
      w = x;
      const double v = train::final_layer_ce(model::forward_with_trace(m, batch, labels)).loss;
      w = saved;
      return v;
    };
    CHECK(max_relative_error(g.blocks[0].w1, finite_diff_grad(f, w, 1e-5), 1e-8) < 1e-4);
  }

  TEST_CASE("batch shape errors") {
    const auto cfg = testsupport::tiny_config(Arch::kTransformer);
    Rng rng(10);
    const auto m = model::init_model(cfg, rng);
    CHECK_THROWS_AS(model::forward_with_trace(m, Tensor({2, cfg.seq_len + 1, cfg.input_dim})), DimensionError);
    CHECK_THROWS_AS(model::forward_with_trace(m, testsupport::random_batch(cfg, 2, rng), {0, 7}), IndexError);
  }
}
