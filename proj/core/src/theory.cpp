#include "layersim/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"

namespace layersim::theory {

namespace {

void require_unit(std::span<const double> v, const char* name) {
  if (std::abs(norm2(v) - 1.0) > 1e-12) throw ConfigError(std::string(name) + " must be a unit vector");
}

std::vector<double> rescaled(std::vector<double> v, double norm) {
  const double len = norm2(v);
  if (len == 0.0) throw DegenerateError("path passes through the origin");
  for (auto& x : v) x *= norm / len;
  return v;
}

}  // namespace

std::vector<double> uniform_grid(std::size_t points) {
  if (points < 2) throw ConfigError("grid needs at least 2 points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

GeodesicPath make_path(std::vector<double> h0, std::vector<double> h1, std::vector<double> grid) {
  if (h0.size() != h1.size() || h0.empty()) throw DimensionError("path endpoints must have equal nonzero length");
  require_unit(h0, "h0");
  require_unit(h1, "h1");
  if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0) {
    throw ConfigError("grid must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("grid must be strictly increasing");
  return {std::move(h0), std::move(h1), std::move(grid)};
}

std::vector<double> geodesic_point(const GeodesicPath& path, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("geodesic_point: x must lie in [0, 1]");
  std::vector<double> out(path.h0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - x) * path.h0[i] + x * path.h1[i];
  return out;
}

CosMonotoneReport verify_cos_monotone(const GeodesicPath& path, double tolerance) {
  const double c = dot(path.h0, path.h1);
  if (c <= -1.0 + 1e-12) throw DegenerateError("antipodal endpoints: the path crosses the origin");
  CosMonotoneReport rep;
  rep.curve.reserve(path.grid.size());
  for (double x : path.grid) {
    const auto h = geodesic_point(path, x);
    rep.curve.push_back(std::clamp(dot(h, path.h1) / norm2(h), -1.0, 1.0));  // ‖h1‖ = 1
  }
  rep.min_increment = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rep.curve.size(); ++i)
    rep.min_increment = std::min(rep.min_increment, rep.curve[i] - rep.curve[i - 1]);
  rep.monotone = rep.min_increment >= -tolerance;
  rep.strict = rep.min_increment > 0.0;
  return rep;
}

// Factored as (1 − x)(1 + c − 2cx), which vanishes exactly at x = 1.
double p_quadratic(double c, double x) { return (1.0 - x) * (1.0 + c - 2.0 * c * x); }

PGridReport sweep_p_quadratic(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw ConfigError("sweep step must lie in (0, 1]");
  const auto cells = static_cast<std::size_t>(std::llround(1.0 / step));
  PGridReport rep;
  rep.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t ci = 0; ci <= 2 * cells; ++ci) {
    const double c = -1.0 + static_cast<double>(ci) / static_cast<double>(cells);
    for (std::size_t xi = 0; xi <= cells; ++xi) {
      const double x = static_cast<double>(xi) / static_cast<double>(cells);
      const double p = p_quadratic(c, x);
      ++rep.points;
      if (p < rep.min_value) {
        rep.min_value = p;
        rep.argmin_c = c;
        rep.argmin_x = x;
      }
    }
    rep.max_abs_at_one = std::max(rep.max_abs_at_one, std::abs(p_quadratic(c, 1.0)));
  }
  rep.pass = rep.min_value >= -1e-12 && rep.max_abs_at_one == 0.0;
  return rep;
}

EtfClassifier make_etf(std::size_t classes, std::size_t dim, Rng& rng) {
  if (classes < 2) throw ConfigError("simplex ETF needs K >= 2");
  if (classes > dim + 1) {
    throw ConfigError("simplex ETF infeasible: K = " + std::to_string(classes) + " exceeds d + 1 = " +
                      std::to_string(dim + 1));
  }
  const std::size_t K = classes;
  // Simplex frame M = √(K/(K−1))·(I − 11ᵀ/K); its columns span 1^⊥ in R^K.
  const double s = std::sqrt(static_cast<double>(K) / static_cast<double>(K - 1));
  Tensor frame({K, K});
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) frame(i, j) = s * ((i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(K));
  // Orthonormal basis V of 1^⊥ (K × (K−1)) by Gram-Schmidt against 1/√K.
  Tensor basis({K, K - 1});
  {
    std::vector<std::vector<double>> done{std::vector<double>(K, 1.0 / std::sqrt(static_cast<double>(K)))};
    std::size_t col = 0;
    for (std::size_t e = 0; e < K && col < K - 1; ++e) {
      std::vector<double> v(K, 0.0);
      v[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : done) {
          const double p = dot(u, v);
          for (std::size_t i = 0; i < K; ++i) v[i] -= p * u[i];
        }
      const double len = norm2(v);
      if (len < 1e-8) continue;
      for (auto& x : v) x /= len;
      for (std::size_t i = 0; i < K; ++i) basis(i, col) = v[i];
      done.push_back(std::move(v));
      ++col;
    }
  }
  const Tensor coords = matmul_at(basis, frame);                // (K−1) × K
  const Tensor embed = random_orthonormal_columns(dim, K - 1, rng);  // d × (K−1)
  return {transpose(matmul(embed, coords))};
}

SoftmaxMonotoneReport verify_softmax_monotone(const EtfClassifier& etf, std::size_t k, std::span<const double> h0,
                                              double norm, std::span<const double> grid) {
  const std::size_t K = etf.classes(), d = etf.dim();
  if (k >= K) throw IndexError("verify_softmax_monotone: class index out of range");
  if (h0.size() != d) throw DimensionError("verify_softmax_monotone: h0 has wrong dimension");
  if (!(norm > 0.0)) throw ConfigError("verify_softmax_monotone: norm must be positive");
  if (std::abs(norm2(h0) - norm) > 1e-12 * norm) throw ConfigError("h0 must have the same norm as h1");
  std::vector<double> h1(etf.weights.row(k).begin(), etf.weights.row(k).end());
  for (auto& v : h1) v *= norm;
  if (dot(h0, h1) <= -(1.0 - 1e-12) * norm * norm) throw DegenerateError("antipodal endpoints");
  if (grid.size() < 2) throw ConfigError("grid needs at least 2 points");

  std::vector<std::vector<double>> probs;
  for (double x : grid) {
    std::vector<double> p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = (1.0 - x) * h0[i] + x * h1[i];
    p = rescaled(std::move(p), norm);
    std::vector<double> z(K);
    for (std::size_t c = 0; c < K; ++c) z[c] = dot(etf.weights.row(c), p);
    probs.push_back(softmax(z));
  }
  SoftmaxMonotoneReport rep;
  rep.min_true_increment = std::numeric_limits<double>::infinity();
  rep.max_other_increment = -std::numeric_limits<double>::infinity();
  for (const auto& p : probs) rep.true_curve.push_back(p[k]);
  for (std::size_t s = 1; s < probs.size(); ++s) {
    for (std::size_t c = 0; c < K; ++c) {
      const double inc = probs[s][c] - probs[s - 1][c];
      if (c == k) {
        rep.min_true_increment = std::min(rep.min_true_increment, inc);
      } else {
        rep.max_other_increment = std::max(rep.max_other_increment, inc);
      }
    }
  }
  rep.true_class_increasing = rep.min_true_increment > 0.0;
  rep.others_decreasing = rep.max_other_increment < 0.0;
  return rep;
}

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double len = 0.0;
  do {
    for (auto& x : v) x = rng.normal();
    len = norm2(v);
  } while (len < 1e-12);
  for (auto& x : v) x /= len;
  return v;
}

std::vector<double> random_softmax_path_start(const EtfClassifier& etf, std::size_t k, double norm, Rng& rng) {
  const std::size_t K = etf.classes(), d = etf.dim();
  if (K - 1 >= d) throw ConfigError("random_softmax_path_start: null(W) is empty when K − 1 >= d");
  // Orthonormal basis of the row space of W (rank K − 1).
  std::vector<std::vector<double>> rows;
  for (std::size_t c = 0; c < K && rows.size() < K - 1; ++c) {
    std::vector<double> v(etf.weights.row(c).begin(), etf.weights.row(c).end());
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : rows) {
        const double p = dot(u, v);
        for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
      }
    const double len = norm2(v);
    if (len < 1e-8) continue;
    for (auto& x : v) x /= len;
    rows.push_back(std::move(v));
  }
  std::vector<double> eta;
  double len = 0.0;
  do {
    eta = random_unit(d, rng);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : rows) {
        const double p = dot(u, eta);
        for (std::size_t i = 0; i < d; ++i) eta[i] -= p * u[i];
      }
    len = norm2(eta);
  } while (len < 1e-6);
  for (auto& x : eta) x /= len;
  const double c = rng.uniform(-0.999, 0.999);
  const double s = std::sqrt(1.0 - c * c);
  std::vector<double> h0(d);
  for (std::size_t i = 0; i < d; ++i) h0[i] = norm * (c * etf.weights(k, i) + s * eta[i]);
  // Fix the norm exactly against round-off.
  return rescaled(std::move(h0), norm);
}

FeatureDump synthesize_geodesic_dump(std::size_t samples, std::size_t layers, std::size_t dim, std::size_t classes,
                                     Rng& rng, double norm) {
  if (samples == 0 || layers == 0) throw ConfigError("synthesize_geodesic_dump: need samples and layers");
  const EtfClassifier etf = make_etf(classes, dim, rng);
  FeatureDump dump;
  dump.features = Tensor({layers + 1, samples, dim});
  dump.labels.resize(samples);
  dump.classes = classes;
  dump.classifier_w = etf.weights;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t k = i % classes;
    dump.labels[i] = k;
    const auto h0 = random_softmax_path_start(etf, k, norm, rng);
    for (std::size_t l = 0; l <= layers; ++l) {
      const double x = static_cast<double>(l) / static_cast<double>(layers);
      std::vector<double> p(dim);
      for (std::size_t j = 0; j < dim; ++j) p[j] = (1.0 - x) * h0[j] + x * norm * etf.weights(k, j);
      p = rescaled(std::move(p), norm);
      std::copy(p.begin(), p.end(), dump.feature(l, i).begin());
    }
  }
  return dump;
}

}  // namespace layersim::theory
