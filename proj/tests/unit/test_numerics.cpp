#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"
#include "layersim/rng.hpp"
#include "layersim/tensor.hpp"

using namespace layersim;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction and shape checks") {
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t(1, 2) == 1.5);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    const auto r = t.reshaped({3, 2});
    CHECK(r.rows() == 3);
    CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  }

  TEST_CASE("leading-axis slices and finiteness") {
    Tensor t({2, 2, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    const auto s = t.row(1);
    CHECK(s.size() == 4);
    CHECK(s[0] == 4.0);
    CHECK(t.all_finite());
    t[3] = std::nan("");
    CHECK_FALSE(t.all_finite());
  }
}

TEST_SUITE("rng") {
  TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs |= x != c.next_u64();
    }
    CHECK(differs);
  }

  TEST_CASE("uniform ranges and index bounds") {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(r.uniform_index(5) < 5);
    }
  }

  TEST_CASE("normal moments") {
    Rng r(11);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
  }

  TEST_CASE("shuffle is a permutation and derived streams are independent of parent draws") {
    Rng r(3);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    r.shuffle(v);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
    CHECK_FALSE(std::is_sorted(v.begin(), v.end()));
    Rng p(9), q(9);
    auto d1 = p.derive(1);
    auto d2 = q.derive(1);
    CHECK(d1.next_u64() == d2.next_u64());
    CHECK(p.derive(2).next_u64() != q.derive(1).next_u64());
  }
}

TEST_SUITE("numerics") {
  TEST_CASE("matmul hand cases") {
    const auto a = Tensor::matrix({{1, 2}, {3, 4}});
    const auto b = Tensor::matrix({{1}, {1}});
    CHECK(matmul(a, b) == Tensor::matrix({{3}, {7}}));
    Rng rng(1);
    const auto m = random_matrix(3, 4, rng);
    CHECK(matmul(Tensor::identity(3), m) == m);
    CHECK_THROWS_AS(matmul(a, Tensor::matrix({{1, 2, 3}})), DimensionError);
  }

  TEST_CASE("matmul variants agree with a triple-loop oracle") {
    Rng rng(2);
    const auto a = random_matrix(5, 7, rng);
    const auto b = random_matrix(7, 3, rng);
    const auto ref = naive_matmul(a, b);
    CHECK(max_abs_diff(matmul(a, b), ref) < 1e-12);
    CHECK(max_abs_diff(matmul_bt(a, transpose(b)), ref) < 1e-12);
    CHECK(max_abs_diff(matmul_at(transpose(a), b), ref) < 1e-12);
    Tensor acc({5, 3}, 1.0);
    matmul_bt_acc(a, transpose(b), acc);
    Tensor expect = ref;
    for (auto& v : expect.data()) v += 1.0;
    CHECK(max_abs_diff(acc, expect) < 1e-12);
    Tensor acc2({5, 3}, 0.0);
    matmul_at_acc(transpose(a), b, acc2);
    CHECK(max_abs_diff(acc2, ref) < 1e-12);
  }

  TEST_CASE("softmax") {
    std::vector<double> z3(3, 0.0);
    for (double p : softmax(z3)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const std::vector<double> big{1000, 1000};
    const auto pb = softmax(big);
    CHECK(pb[0] == 0.5);
    CHECK(pb[1] == 0.5);
    const std::vector<double> x{1, 2, 3};
    const auto p = softmax(x);
    long double den = 0;
    for (double v : x) den += std::exp(static_cast<long double>(v));
    for (std::size_t i = 0; i < 3; ++i) {
      const long double ref = std::exp(static_cast<long double>(x[i])) / den;
      CHECK(std::abs(static_cast<long double>(p[i]) - ref) / ref < 4e-16L);
    }
  }

  TEST_CASE("cross entropy") {
    const std::vector<double> u(5, 0.3);
    CHECK(cross_entropy(u, 2) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    const std::vector<double> two{10, -10};
    const double ref = std::log1p(std::exp(-20.0));
    CHECK(std::abs(cross_entropy(two, 0) - ref) / ref < 1e-15);
    CHECK(cross_entropy(two, 0) == doctest::Approx(2.06e-9).epsilon(1e-3));
    double prev = 1e300;
    for (double s : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      const std::vector<double> l{0.0, s, 0.0};
      const double ce = cross_entropy(l, 1);
      CHECK(ce < prev);
      prev = ce;
    }
    CHECK_THROWS_AS(cross_entropy(two, 2), IndexError);
    const std::vector<double> l{0.2, -0.4, 1.1};
    const auto g = cross_entropy_grad(l, 1);
    const auto p = softmax(l);
    CHECK(g[0] == p[0]);
    CHECK(g[1] == doctest::Approx(p[1] - 1.0));
    CHECK(std::abs(g[0] + g[1] + g[2]) < 1e-15);
  }
}

TEST_SUITE("numerics") {
  TEST_CASE("finite differences") {
    const auto x = Tensor::vector({3.0});
    const auto g = finite_diff_grad([](const Tensor& t) { return t[0] * t[0]; }, x, 1e-5);
    CHECK(std::abs(g[0] - 6.0) < 1e-6);
    const auto z = finite_diff_grad([](const Tensor&) { return 4.2; }, Tensor::vector({1.0, 2.0}), 1e-5);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);
  }

  TEST_CASE("finite differences of cross entropy through a linear layer match the analytic gradient") {
    Rng rng(5);
    const auto w = random_matrix(3, 4, rng);
    const auto h = Tensor::vector({0.3, -1.2, 0.8, 0.1});
    const std::size_t label = 2;
    auto loss = [&](const Tensor& wt) {
      std::vector<double> logits(3, 0.0);
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t c = 0; c < 4; ++c) logits[k] += wt(k, c) * h[c];
      return cross_entropy(logits, label);
    };
    std::vector<double> logits(3, 0.0);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < 4; ++c) logits[k] += w(k, c) * h[c];
    const auto dl = cross_entropy_grad(logits, label);
    Tensor analytic({3, 4});
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < 4; ++c) analytic(k, c) = dl[k] * h[c];
    CHECK(max_relative_error(analytic, finite_diff_grad(loss, w, 1e-6), 1e-8) < 1e-5);
  }

  TEST_CASE("argmax ties go to the lowest index") {
    const std::vector<double> a{0.1, 0.9, 0.3};
    const std::vector<double> b{0.5, 0.5};
    CHECK(argmax(a) == 1);
    CHECK(argmax(b) == 0);
  }

  TEST_CASE("symmetric eigen-decomposition reconstructs the matrix") {
    Rng rng(8);
    const auto m = random_matrix(6, 6, rng);
    const auto s = add(m, transpose(m));
    const auto e = symmetric_eigen(s);
    CHECK(std::is_sorted(e.values.begin(), e.values.end()));
    Tensor lam({6, 6});
    for (std::size_t i = 0; i < 6; ++i) lam(i, i) = e.values[i];
    const auto rec = matmul(matmul(e.vectors, lam), transpose(e.vectors));
    CHECK(max_abs_diff(rec, s) < 1e-11);
    CHECK(max_abs_diff(matmul_at(e.vectors, e.vectors), Tensor::identity(6)) < 1e-12);
  }

  TEST_CASE("pseudo-inverse satisfies the Penrose identities on a rank-deficient PSD matrix") {
    Rng rng(9);
    const auto b = random_matrix(5, 2, rng);
    const auto a = matmul_bt(b, b);  // rank 2
    const auto p = symmetric_pinv(a, 1e-10);
    CHECK(max_abs_diff(matmul(matmul(a, p), a), a) < 1e-10);
    CHECK(max_abs_diff(matmul(matmul(p, a), p), p) < 1e-8);
  }

  TEST_CASE("random orthogonal matrices") {
    Rng rng(10);
    const auto q = random_orthogonal(7, rng);
    CHECK(max_abs_diff(matmul_at(q, q), Tensor::identity(7)) < 1e-12);
    const auto c = random_orthonormal_columns(9, 4, rng);
    CHECK(c.rows() == 9);
    CHECK(c.cols() == 4);
    CHECK(max_abs_diff(matmul_at(c, c), Tensor::identity(4)) < 1e-12);
    CHECK_THROWS(random_orthonormal_columns(3, 4, rng));
  }
}
