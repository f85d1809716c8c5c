#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "layersim/datasets.hpp"
#include "layersim/error.hpp"
#include "layersim/exitsim.hpp"
#include "layersim/numerics.hpp"
#include "layersim/training.hpp"
#include "test_support.hpp"

using namespace layersim;
using model::Arch;

namespace {

data::Dataset separable(std::size_t per_class = 40) {
  data::MixtureSpec s;
  s.classes = 2;
  s.input_dim = 4;
  s.tokens = 3;
  s.between_std = 3.0;
  s.within_std = 0.3;
  s.per_class = per_class;
  s.seed = 17;
  return data::gen_mixture(s);
}

model::ModelConfig config_for(const data::Dataset& ds, Arch arch, std::size_t layers = 2) {
  model::ModelConfig c;
  c.layers = layers;
  c.dim = 8;
  c.seq_len = ds.seq_len();
  c.input_dim = ds.input_dim();
  c.heads = 2;
  c.classes = ds.classes;
  c.arch = arch;
  return c;
}

double train_accuracy(const model::Model& m, const data::Dataset& ds) {
  const auto trace = model::forward_with_trace(m, ds.samples, ds.labels);
  const auto p = model::predict(trace, m.config.layers);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == ds.labels[i];
  return static_cast<double>(hit) / static_cast<double>(p.size());
}

std::vector<Tensor> flatten(const model::Model& m) {
  std::vector<Tensor> out;
  m.params.for_each([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

model::ForwardTrace hand_trace(std::vector<Tensor> features, std::vector<Tensor> logits, std::vector<std::size_t> y) {
  model::ForwardTrace t;
  t.samples = y.size();
  t.features = std::move(features);
  t.logits = std::move(logits);
  t.labels = std::move(y);
  return t;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("layer weights") {
    const auto l12 = train::layer_weights(12, train::WeightScheme::kLinear);
    CHECK(l12.front() == doctest::Approx(2.0 / 156.0).epsilon(1e-14));
    CHECK(l12.back() == doctest::Approx(24.0 / 156.0).epsilon(1e-14));
    CHECK(l12.front() == doctest::Approx(0.01282).epsilon(1e-3));
    CHECK(l12.back() == doctest::Approx(0.15385).epsilon(1e-4));
    for (auto scheme : {train::WeightScheme::kLinear, train::WeightScheme::kUniform}) {
      const auto one = train::layer_weights(1, scheme);
      REQUIRE(one.size() == 1);
      CHECK(one[0] == 1.0);
    }
    const auto l4 = train::layer_weights(4, train::WeightScheme::kLinear);
    const std::vector<double> expect{0.1, 0.2, 0.3, 0.4};
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(l4[i] == doctest::Approx(expect[i]).epsilon(1e-15));
      sum += l4[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    const auto u = train::layer_weights(5, train::WeightScheme::kUniform);
    for (double v : u) CHECK(v == 0.2);
  }

  TEST_CASE("aligned loss is the weighted sum of per-layer CE") {
    // K=2, label 0: CE of logits (0, -z) is log(1 + e^-z).
    auto logits_for = [](double ce) {
      const double z = -std::log(std::exp(ce) - 1.0);
      return Tensor::matrix({{0.0, -z}});
    };
    const auto t = hand_trace({Tensor({1, 2}), Tensor({1, 2}), Tensor({1, 2})},
                              {Tensor({1, 2}), logits_for(0.9), logits_for(0.3)}, {0});
    const std::vector<double> lambda{1.0 / 3.0, 2.0 / 3.0};
    CHECK(train::aligned_loss(t, lambda) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("aligned loss with identical logits reduces to final-layer CE") {
    const auto lg = Tensor::matrix({{0.3, -0.2, 1.0}, {2.0, 0.1, 0.4}});
    const auto t = hand_trace({Tensor({2, 2}), Tensor({2, 2}), Tensor({2, 2}), Tensor({2, 2})}, {lg, lg, lg, lg}, {2, 1});
    const auto lambda = train::layer_weights(3, train::WeightScheme::kLinear);
    CHECK(train::aligned_loss(t, lambda) == doctest::Approx(train::final_layer_ce(t).loss).epsilon(1e-14));
  }

  TEST_CASE("ce_reg hand cases") {
    const auto lg = Tensor::matrix({{0.3, -0.2}});
    const auto h2 = Tensor::matrix({{1.0, 0.0}});
    const auto h1 = Tensor::matrix({{0.5, std::sqrt(3.0) / 2.0}});  // cos = 0.5
    const auto t = hand_trace({Tensor::matrix({{0.2, 0.7}}), h1, h2}, {lg, lg, lg}, {1});
    const double ce = train::final_layer_ce(t).loss;
    CHECK(train::ce_reg_loss(t, 0.0) == ce);
    CHECK(train::ce_reg_loss(t, 1.0) == doctest::Approx(ce + 0.5 / 3.0).epsilon(1e-14));
    const auto par = hand_trace({Tensor::matrix({{3.0, 0.0}}), Tensor::matrix({{2.0, 0.0}}), h2}, {lg, lg, lg}, {1});
    CHECK(train::ce_reg_loss(par, 5.0) == doctest::Approx(ce).epsilon(1e-15));
  }

  TEST_CASE("alternating schedule") {
    train::TrainConfig c;
    c.loss_mode = train::LossMode::kAligned;
    c.alternating = true;
    CHECK(train::objective_for_step(c, 1) == train::StepObjective::kFinalCe);
    CHECK(train::objective_for_step(c, 2) == train::StepObjective::kAligned);
    CHECK(train::objective_for_step(c, 3) == train::StepObjective::kFinalCe);
    c.alternating = false;
    CHECK(train::objective_for_step(c, 1) == train::StepObjective::kAligned);
    c.loss_mode = train::LossMode::kStandard;
    CHECK(train::objective_for_step(c, 2) == train::StepObjective::kFinalCe);
  }

  TEST_CASE("AdamW matches a hand-rolled two-step update") {
    Tensor w = Tensor::matrix({{1.0, -2.0}});
    Tensor b = Tensor::vector({0.5});
    const Tensor w0 = w, b0 = b;
    const Tensor gw1 = Tensor::matrix({{0.1, 0.3}}), gb1 = Tensor::vector({-0.2});
    const Tensor gw2 = Tensor::matrix({{-0.05, 0.2}}), gb2 = Tensor::vector({0.4});
    train::AdamW opt;
    std::vector<Tensor*> ps{&w, &b};
    const double lr = 0.01, wd = 0.1;
    std::vector<const Tensor*> g1{&gw1, &gb1}, g2{&gw2, &gb2};
    opt.step(ps, g1, lr, wd);
    opt.step(ps, g2, lr, wd);

    auto oracle = [&](double p, double ga, double gb, bool decay) {
      double m = 0, v = 0;
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      double g[2] = {ga, gb};
      for (int t = 1; t <= 2; ++t) {
        m = b1 * m + (1 - b1) * g[t - 1];
        v = b2 * v + (1 - b2) * g[t - 1] * g[t - 1];
        const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
        p -= lr * (mh / (std::sqrt(vh) + eps) + (decay ? wd * p : 0.0));
      }
      return p;
    };
    CHECK(w[0] == doctest::Approx(oracle(w0[0], gw1[0], gw2[0], true)).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(oracle(w0[1], gw1[1], gw2[1], true)).epsilon(1e-14));
    CHECK(b[0] == doctest::Approx(oracle(b0[0], gb1[0], gb2[0], false)).epsilon(1e-14));
  }

  TEST_CASE("lr = 0 leaves parameters exactly unchanged") {
    const auto ds = separable(10);
    const auto cfg = config_for(ds, Arch::kTransformer);
    Rng init(1);
    const auto m0 = model::init_model(cfg, init);
    for (double wd : {0.0, 0.05}) {
      train::TrainConfig tc;
      tc.epochs = 2;
      tc.batch_size = 4;
      tc.lr = 0.0;
      tc.weight_decay = wd;
      Rng rng(2);
      const auto r = train::train(m0, ds, tc, rng);
      CHECK(flatten(r.model) == flatten(m0));
    }
  }

  TEST_CASE("standard training fits separable data") {
    const auto ds = separable();
    for (auto arch : {Arch::kTransformer, Arch::kMlpSkip}) {
      const auto cfg = config_for(ds, arch);
      Rng rng(3);
      auto m = model::init_model(cfg, rng);
      train::TrainConfig tc;
      tc.epochs = 50;
      tc.batch_size = 16;
      tc.lr = 3e-3;
      const auto r = train::train(std::move(m), ds, tc, rng);
      CHECK(r.log.size() == 50);
      CHECK(train_accuracy(r.model, ds) >= 0.99);
    }
  }

  TEST_CASE("same seed gives bit-identical runs for every mode") {
    const auto ds = separable(12);
    for (auto mode : {train::LossMode::kStandard, train::LossMode::kAligned, train::LossMode::kCeReg}) {
      const auto cfg = config_for(ds, Arch::kTransformer);
      train::TrainConfig tc;
      tc.loss_mode = mode;
      tc.epochs = 3;
      tc.batch_size = 5;
      tc.cosine_decay = true;
      auto run = [&] {
        Rng rng(99);
        auto m = model::init_model(cfg, rng);
        return train::train(std::move(m), ds, tc, rng).model;
      };
      CHECK(flatten(run()) == flatten(run()));
    }
  }

  TEST_CASE("alternating schedule applies both objectives") {
    const auto ds = separable(8);
    const auto cfg = config_for(ds, Arch::kMlpSkip);
    train::TrainConfig tc;
    tc.loss_mode = train::LossMode::kAligned;
    tc.alternating = true;
    tc.epochs = 1;
    tc.batch_size = 4;
    std::vector<train::StepObjective> seen;
    Rng rng(4);
    auto m = model::init_model(cfg, rng);
    train::train(std::move(m), ds, tc, rng, [&](std::size_t, train::StepObjective o) { seen.push_back(o); });
    REQUIRE(seen.size() == 4);
    CHECK(seen[0] == train::StepObjective::kFinalCe);
    CHECK(seen[1] == train::StepObjective::kAligned);
    CHECK(seen[2] == train::StepObjective::kFinalCe);
    CHECK(seen[3] == train::StepObjective::kAligned);
  }

  TEST_CASE("non-finite loss raises TrainingError") {
    auto ds = separable(4);
    ds.samples[0] = std::numeric_limits<double>::quiet_NaN();
    const auto cfg = config_for(ds, Arch::kMlpSkip);
    train::TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 8;
    Rng rng(5);
    auto m = model::init_model(cfg, rng);
    CHECK_THROWS_AS(train::train(std::move(m), ds, tc, rng), TrainingError);
  }

  TEST_CASE("multi-classifier with one layer follows standard training") {
    const auto ds = separable(10);
    const auto cfg = config_for(ds, Arch::kTransformer, 1);
    train::TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    Rng init(6);
    const auto m0 = model::init_model(cfg, init);
    Rng ra(7), rb(7);
    const auto standard = train::train(m0, ds, tc, ra);
    auto multi_cfg = tc;
    multi_cfg.loss_mode = train::LossMode::kMultiClassifier;
    const auto multi = train::train_multi_classifier(m0, train::multi_head_from_shared(m0), ds, multi_cfg, rb);
    CHECK(max_abs_diff(multi.head.weights[0], standard.model.params.classifier_w) < 1e-12);
    CHECK(max_abs_diff(multi.head.biases[0], standard.model.params.classifier_b) < 1e-12);
    CHECK(multi.model.params.classifier_w == m0.params.classifier_w);
    const auto a = flatten(multi.model), b = flatten(standard.model);
    for (std::size_t i = 0; i + 2 < a.size(); ++i) CHECK(max_abs_diff(a[i], b[i]) < 1e-12);
  }

  TEST_CASE("multi-classifier per-layer losses decrease and the head count matches the overhead") {
    const auto ds = separable(20);
    const auto cfg = config_for(ds, Arch::kMlpSkip, 3);
    Rng rng(8);
    auto m = model::init_model(cfg, rng);
    auto head = train::init_multi_head(cfg, rng);
    const auto shared = cfg.classes * cfg.dim + cfg.classes;
    CHECK(head.count() - shared == exitsim::classifier_param_overhead(3, cfg.classes, cfg.dim, true));

    auto per_layer = [&](const model::Model& mm, const train::MultiClassifierHead& h) {
      const auto t = model::forward_with_trace(mm, ds.samples, ds.labels);
      std::vector<double> out;
      for (std::size_t l = 1; l <= 3; ++l) {
        const auto lg = model::apply_classifier(t.features[l], h.weights[l - 1], h.biases[l - 1]);
        double s = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) s += cross_entropy(lg.row(i), ds.labels[i]);
        out.push_back(s / static_cast<double>(ds.size()));
      }
      return out;
    };
    const auto before = per_layer(m, head);
    train::TrainConfig tc;
    tc.loss_mode = train::LossMode::kMultiClassifier;
    tc.epochs = 20;
    tc.batch_size = 8;
    tc.lr = 3e-3;
    const auto r = train::train_multi_classifier(m, head, ds, tc, rng);
    const auto after = per_layer(r.model, r.head);
    for (std::size_t l = 0; l < 3; ++l) CHECK(after[l] < before[l]);
    CHECK(r.model.params.classifier_w == m.params.classifier_w);
  }

  TEST_CASE("training log CSV") {
    std::vector<train::EpochLog> log{{1, 4, 0.5, 0.75, 0.01}, {2, 8, 0.25, 1.0, 0.02}};
    std::ostringstream out;
    train::write_log_csv(out, log, {"seed: 3"});
    const auto s = out.str();
    CHECK(s.rfind("# seed: 3\nepoch,steps,mean_loss,final_layer_accuracy,wall_seconds\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 4);
  }

  TEST_CASE("config validation") {
    train::TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.lr = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(train::parse_loss_mode("bogus"), ConfigError);
  }
}
