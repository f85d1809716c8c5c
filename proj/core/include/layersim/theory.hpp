#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "layersim/feature_dump.hpp"
#include "layersim/rng.hpp"
#include "layersim/tensor.hpp"

namespace layersim::theory {

/// Straight-line path h(x) = (1−x)·h0 + x·h1 between unit vectors.
struct GeodesicPath {
  std::vector<double> h0, h1;
  std::vector<double> grid;  // strictly increasing, grid.front() = 0, grid.back() = 1
};

/// Validates unit norms (±1e-12) and the grid; throws ConfigError otherwise.
GeodesicPath make_path(std::vector<double> h0, std::vector<double> h1, std::vector<double> grid);
/// `points` evenly spaced values from 0 to 1 inclusive (points ≥ 2).
std::vector<double> uniform_grid(std::size_t points);

/// (1−x)·h0 + x·h1; RangeError-style ConfigError for x outside [0, 1].
std::vector<double> geodesic_point(const GeodesicPath& path, double x);

struct CosMonotoneReport {
  bool monotone = false;        // every step ≥ −tolerance
  bool strict = false;          // every step > 0
  double min_increment = 0.0;
  std::vector<double> curve;    // cos(h(x), h1) over the grid
};

/// Checks that cos(h(x), h1) is nondecreasing on the grid (raw, unnormalized
/// interpolants). DegenerateError for antipodal endpoints.
CosMonotoneReport verify_cos_monotone(const GeodesicPath& path, double tolerance = 1e-12);

/// P(x) = 2c·x² − (1+3c)·x + (1+c), the numerator sign of dC/dx.
double p_quadratic(double c, double x);

struct PGridReport {
  double min_value = 0.0;
  double argmin_c = 0.0, argmin_x = 0.0;
  double max_abs_at_one = 0.0;  // max |P(1)| over the c grid
  std::size_t points = 0;
  bool pass = false;            // min_value ≥ −1e-12 and P(1) = 0 exactly
};

/// Exhaustive sweep over c ∈ [−1, 1], x ∈ [0, 1] at `step` resolution. Grid
/// values are computed as i·step (not accumulated) so the endpoints are exact.
PGridReport sweep_p_quadratic(double step = 0.01);

/// K unit rows, pairwise inner product −1/(K−1), Gram = (K/(K−1))(I − 11ᵀ/K).
struct EtfClassifier {
  Tensor weights;  // [K × d]
  std::size_t classes() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }
};

/// ConfigError ("infeasible") unless 2 ≤ K ≤ d + 1.
EtfClassifier make_etf(std::size_t classes, std::size_t dim, Rng& rng);

struct SoftmaxMonotoneReport {
  bool true_class_increasing = false;  // strict at every step
  bool others_decreasing = false;      // every other class strictly decreasing at every step
  double min_true_increment = 0.0;
  double max_other_increment = 0.0;
  std::vector<double> true_curve;
};

/// Path from h0 to h1 = norm·w_k with every interpolant rescaled to `norm`;
/// evaluates softmax(W·p(x)) over `grid`. h0 must have the same norm (±1e-12
/// relative) and must not be antipodal to h1.
SoftmaxMonotoneReport verify_softmax_monotone(const EtfClassifier& etf, std::size_t k, std::span<const double> h0,
                                              double norm, std::span<const double> grid);

/// Start point whose displacement toward norm·w_k lies in span{w_k} ⊕ null(W):
/// h0 = norm·(c·w_k + √(1−c²)·η) with c ~ U(−1, 1) and η a unit vector
/// orthogonal to every row of W. Requires K − 1 < d.
std::vector<double> random_softmax_path_start(const EtfClassifier& etf, std::size_t k, double norm, Rng& rng);

/// Uniformly random unit vector.
std::vector<double> random_unit(std::size_t dim, Rng& rng);

/// N samples (label i mod K); h^(ℓ) is the rescaled path point at x = ℓ/L from
/// random_softmax_path_start to norm·w_label under a fresh ETF classifier (no bias).
FeatureDump synthesize_geodesic_dump(std::size_t samples, std::size_t layers, std::size_t dim, std::size_t classes,
                                     Rng& rng, double norm = 4.0);

}  // namespace layersim::theory
