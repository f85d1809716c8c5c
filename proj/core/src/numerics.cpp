#include "layersim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "layersim/error.hpp"

namespace layersim {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 operand, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      if (s == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

void matmul_bt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  if (a.cols() != b.cols() || out.rank() != 2 || out.rows() != a.rows() || out.cols() != b.rows()) {
    throw DimensionError("matmul_bt: shape mismatch " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  // Transposing b first turns the inner loop into a contiguous axpy.
  const Tensor bt = transpose(b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.data().data();
  const double* pb = bt.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      if (s == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  Tensor out({a.rows(), b.rows()});
  matmul_bt_acc(a, b, out);
  return out;
}

void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  require_rank2(a, "matmul_at");
  require_rank2(b, "matmul_at");
  if (a.rows() != b.rows() || out.rank() != 2 || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw DimensionError("matmul_at: shape mismatch " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  const std::size_t r = a.rows(), m = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t t = 0; t < r; ++t) {
    const double* arow = pa + t * m;
    const double* brow = pb + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = arow[i];
      if (s == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_at");
  require_rank2(b, "matmul_at");
  Tensor out({a.cols(), b.cols()});
  matmul_at_acc(a, b, out);
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "add");
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void scale_inplace(Tensor& dst, double factor) {
  for (auto& v : dst.data()) v *= factor;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  auto o = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= s[i];
  return out;
}

Tensor scaled(const Tensor& a, double factor) {
  Tensor out = a;
  scale_inplace(out, factor);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Tensor& a) { return norm2(a.data()); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

Tensor softmax(const Tensor& v) { return Tensor(v.shape(), softmax(v.data())); }

namespace {

// log Σ exp(z_i − max). The max term contributes exactly 1, so log1p keeps
// full relative precision when the others are tiny.
double shifted_log_sum_exp(std::span<const double> logits, double mx) {
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  double rest = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != top) rest += std::exp(logits[i] - mx);
  return std::log1p(rest);
}

}  // namespace

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  const double lse = mx + shifted_log_sum_exp(logits, mx);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  // Both terms are nonnegative, so the result is never negative.
  return shifted_log_sum_exp(logits, mx) - (logits[label] - mx);
}

double cross_entropy(const Tensor& logits, std::size_t label) { return cross_entropy(logits.data(), label); }

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw IndexError("cross_entropy_grad: label out of range");
  auto g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  require_same_shape(a, b, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

SymmetricEigen symmetric_eigen(const Tensor& input, double tol, int max_sweeps) {
  require_rank2(input, "symmetric_eigen");
  const std::size_t n = input.rows();
  if (input.cols() != n) throw DimensionError("symmetric_eigen: matrix must be square");
  Tensor a = input;
  Tensor v = Tensor::identity(n);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  const double scale = std::max(frobenius_norm(a), std::numeric_limits<double>::min());

  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

Tensor symmetric_pinv(const Tensor& a, double rel_cutoff) {
  const auto eig = symmetric_eigen(a);
  const std::size_t n = a.rows();
  double vmax = 0.0;
  for (double ev : eig.values) vmax = std::max(vmax, std::abs(ev));
  Tensor out({n, n});
  if (vmax == 0.0) return out;
  for (std::size_t j = 0; j < n; ++j) {
    const double ev = eig.values[j];
    if (std::abs(ev) <= rel_cutoff * vmax) continue;
    const double inv = 1.0 / ev;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) out(r, c) += inv * eig.vectors(r, j) * eig.vectors(c, j);
  }
  return out;
}

Tensor random_orthonormal_columns(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ConfigError("random_orthonormal_columns: k exceeds n");
  // Modified Gram-Schmidt on Gaussian columns; R has positive diagonal, which
  // makes the result Haar-distributed.
  Tensor q({n, k});
  std::vector<double> col(n);
  for (std::size_t j = 0; j < k; ++j) {
    double len = 0.0;
    do {
      for (auto& x : col) x = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < j; ++p) {
          double proj = 0.0;
          for (std::size_t i = 0; i < n; ++i) proj += q(i, p) * col[i];
          for (std::size_t i = 0; i < n; ++i) col[i] -= proj * q(i, p);
        }
      }
      len = norm2(col);
    } while (len < 1e-8);
    for (std::size_t i = 0; i < n; ++i) q(i, j) = col[i] / len;
  }
  return q;
}

Tensor random_orthogonal(std::size_t n, Rng& rng) { return random_orthonormal_columns(n, n, rng); }

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace layersim
