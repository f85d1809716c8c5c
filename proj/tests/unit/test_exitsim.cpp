#include <doctest.h>

#include <sstream>

#include "layersim/error.hpp"
#include "layersim/exitsim.hpp"
#include "layersim/numerics.hpp"
#include "test_support.hpp"

using namespace layersim;

TEST_SUITE("exitsim") {
  TEST_CASE("speedup formula") {
    std::vector<std::size_t> all_last(12, 0);
    all_last[11] = 10;
    CHECK(exitsim::speedup(all_last, 12) == exitsim::Rational{1, 1});
    std::vector<std::size_t> half(12, 0);
    half[5] = 7;
    half[11] = 7;
    const auto s = exitsim::speedup(half, 12);
    CHECK(s == exitsim::Rational{4, 3});
    CHECK(s.value() == doctest::Approx(1.333333).epsilon(1e-6));
    std::vector<std::size_t> first(12, 0);
    first[0] = 5;
    CHECK(exitsim::speedup(first, 12) == exitsim::Rational{12, 1});
    CHECK_THROWS_AS(exitsim::speedup(std::vector<std::size_t>(12, 0), 12), EmptyInputError);
  }

  TEST_CASE("classifier overhead") {
    CHECK(exitsim::classifier_param_overhead(12, 1000, 384, false) == 4224000);
    CHECK(exitsim::classifier_param_overhead(12, 50257, 768, false) == 424571136);
    CHECK(exitsim::classifier_param_overhead(12, 1000, 384, true) == 4224000 + 11000);
    CHECK(exitsim::classifier_param_overhead(1, 1000, 384, true) == 0);
  }

  TEST_CASE("threshold extremes") {
    Rng rng(1);
    const auto d = testsupport::random_dump(30, 5, 6, 10, rng);
    const auto full = exitsim::run_early_exit(d, {1.0});
    for (auto l : full.exit_layer) CHECK(l == 5);
    const auto accs = [&] {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < 30; ++i) hit += argmax(d.logits(5, i)) == d.labels[i];
      return static_cast<double>(hit) / 30.0;
    }();
    CHECK(full.accuracy == accs);
    const auto early = exitsim::run_early_exit(d, {0.01});
    for (auto l : early.exit_layer) CHECK(l == 1);
    CHECK(early.speedup == exitsim::Rational{5, 1});
    const auto at_k = exitsim::threshold_sweep(d, std::vector<double>{0.1});
    CHECK(at_k[0].speedup == exitsim::Rational{5, 1});
    CHECK_THROWS_AS(exitsim::run_early_exit(d, {0.0}), ConfigError);
    CHECK_THROWS_AS(exitsim::run_early_exit(d, {1.5}), ConfigError);
  }

  TEST_CASE("hand-built three-layer dump") {
    // Identity classifier on K=2 logits; sample confidences per layer.
    const auto w = Tensor::identity(2);
    const auto l0 = Tensor::matrix({{0, 0}, {0, 0}, {0, 0}});
    const auto l1 = Tensor::matrix({{3, 0}, {0, 0.1}, {0, 0.2}});  // p≈0.95, 0.52, 0.55
    const auto l2 = Tensor::matrix({{0, 0}, {0, 3}, {0.5, 0}});    // 0.5, 0.95, 0.62
    const auto l3 = Tensor::matrix({{0, 1}, {1, 0}, {0, 0.3}});
    const auto d = testsupport::make_dump({l0, l1, l2, l3}, {0, 1, 0}, w);
    const auto r = exitsim::run_early_exit(d, {0.9});
    CHECK(r.exit_layer == std::vector<std::size_t>{1, 2, 3});
    CHECK(r.predictions == std::vector<std::size_t>{0, 1, 1});
    CHECK(r.counts == std::vector<std::size_t>{1, 1, 1});
    CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(r.speedup == exitsim::Rational{3, 2});
  }

  TEST_CASE("sweep rows match individual runs and the CSV schema") {
    Rng rng(2);
    const auto d = testsupport::random_dump(25, 4, 5, 3, rng, 2.0);
    const std::vector<double> taus{0.4, 0.6, 0.8, 0.95, 1.0};
    const auto rows = exitsim::threshold_sweep(d, taus);
    REQUIRE(rows.size() == taus.size());
    for (std::size_t i = 0; i < taus.size(); ++i) {
      const auto r = exitsim::run_early_exit(d, {taus[i]});
      CHECK(rows[i].threshold == taus[i]);
      CHECK(rows[i].accuracy == r.accuracy);
      CHECK(rows[i].speedup == r.speedup);
      CHECK(rows[i].counts == r.counts);
    }
    std::ostringstream out;
    exitsim::write_pareto_csv(out, rows, 4, {"seed: 1"});
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# seed: 1");
    std::getline(in, line);
    CHECK(line == "tau,accuracy,speedup,speedup_num,speedup_den,m1,m2,m3,m4");
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == taus.size());
  }
}
