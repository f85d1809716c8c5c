#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "layersim/rng.hpp"
#include "layersim/tensor.hpp"

namespace layersim {

// Matrix products. All operands are rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);     // a · b
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // a · bᵀ
Tensor matmul_at(const Tensor& a, const Tensor& b);  // aᵀ · b
Tensor transpose(const Tensor& a);

/// out += a · bᵀ, used by the dense layers where out = x·Wᵀ.
void matmul_bt_acc(const Tensor& a, const Tensor& b, Tensor& out);
/// out += aᵀ · b, the weight-gradient shape.
void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& out);

void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& dst, double factor);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double factor);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Numerically stable softmax (max is subtracted before exponentiation).
std::vector<double> softmax(std::span<const double> logits);
Tensor softmax(const Tensor& v);
std::vector<double> log_softmax(std::span<const double> logits);

/// −log softmax(logits)[label]. Throws IndexError for an out-of-range label.
double cross_entropy(std::span<const double> logits, std::size_t label);
double cross_entropy(const Tensor& logits, std::size_t label);
/// d CE / d logits = softmax(logits) − onehot(label).
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// Central-difference gradient (f(x+h·e_i) − f(x−h·e_i)) / 2h, componentwise.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

/// max_i |a_i − b_i| / max(|a_i|, |b_i|, floor). `floor` keeps entries that
/// are both ~0 from dominating the relative measure.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Tensor vectors;              // column j is the eigenvector for values[j]
};
SymmetricEigen symmetric_eigen(const Tensor& a, double tol = 1e-14, int max_sweeps = 100);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// rel_cutoff · max eigenvalue are treated as zero.
Tensor symmetric_pinv(const Tensor& a, double rel_cutoff);

/// n×n orthogonal matrix from QR of a Gaussian matrix (Haar measure with sign fix).
Tensor random_orthogonal(std::size_t n, Rng& rng);

/// n×k matrix with orthonormal columns (k ≤ n), Haar-distributed.
Tensor random_orthonormal_columns(std::size_t n, std::size_t k, Rng& rng);

Tensor random_normal(Shape shape, double stddev, Rng& rng);

}  // namespace layersim
