#include "layersim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"

namespace layersim::metrics {

std::string_view similarity_name(Similarity s) { return s == Similarity::kCos ? "cos" : "cka"; }

FeatureDump center_features(FeatureDump dump) {
  if (dump.features.empty() || dump.samples() == 0) throw EmptyInputError("center_features: dump has no samples");
  const std::size_t n = dump.samples(), d = dump.dim();
  std::vector<double> mean(d);
  for (std::size_t l = 0; l < dump.layer_count(); ++l) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto h = dump.feature(l, i);
      for (std::size_t c = 0; c < d; ++c) mean[c] += h[c];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto h = dump.feature(l, i);
      for (std::size_t c = 0; c < d; ++c) h[c] -= mean[c];
    }
  }
  return dump;
}

double cos_pair(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateError("cosine similarity undefined for a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

namespace {

bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

void symmetrize_from_upper(Tensor& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
}

}  // namespace

SimilarityMatrix cos_matrix(const FeatureDump& dump) {
  const std::size_t layers = dump.layer_count(), n = dump.samples();
  SimilarityMatrix out{Tensor({layers, layers}), Similarity::kCos, 0};
  for (std::size_t a = 0; a < layers; ++a) {
    out.values(a, a) = 1.0;
    for (std::size_t b = a + 1; b < layers; ++b) {
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t i = 0; i < n; ++i) {
        auto ha = dump.feature(a, i);
        auto hb = dump.feature(b, i);
        if (is_zero(ha) || is_zero(hb)) {
          ++out.skipped;
          continue;
        }
        sum += cos_pair(ha, hb);
        ++used;
      }
      if (used == 0) {
        throw DegenerateError("cos_matrix: every sample has a zero feature at layer pair (" + std::to_string(a) +
                              ", " + std::to_string(b) + ")");
      }
      out.values(a, b) = sum / static_cast<double>(used);
    }
  }
  symmetrize_from_upper(out.values);
  return out;
}

namespace {

Tensor center_columns(const Tensor& x) {
  Tensor out = x;
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t c = 0; c < d; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += x(i, c);
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out(i, c) -= m;
  }
  return out;
}

double frobenius_sq(const Tensor& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

}  // namespace

double cka_linear(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("cka_linear: banks must be [d x N] with equal N, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  if (a.cols() < 2) throw DegenerateError("cka_linear: need at least 2 samples");
  const Tensor za = center_columns(transpose(a)), zb = center_columns(transpose(b));
  // Feature-space form: trace(Kb Ka) = ‖Zaᵀ Zb‖²_F and ‖Ka‖_F = ‖Zaᵀ Za‖_F.
  const double cross = frobenius_sq(matmul_at(za, zb));
  const double na = std::sqrt(frobenius_sq(matmul_at(za, za)));
  const double nb = std::sqrt(frobenius_sq(matmul_at(zb, zb)));
  if (na == 0.0 || nb == 0.0) throw DegenerateError("cka_linear: a centered bank has zero Frobenius norm");
  return std::clamp(cross / (na * nb), 0.0, 1.0);
}

SimilarityMatrix cka_matrix(const FeatureDump& dump) {
  const std::size_t layers = dump.layer_count();
  SimilarityMatrix out{Tensor({layers, layers}), Similarity::kCka, 0};
  std::vector<Tensor> banks;
  for (std::size_t l = 0; l < layers; ++l) banks.push_back(transpose(dump.layer(l)));
  for (std::size_t a = 0; a < layers; ++a) {
    out.values(a, a) = 1.0;
    for (std::size_t b = a + 1; b < layers; ++b) out.values(a, b) = cka_linear(banks[a], banks[b]);
  }
  symmetrize_from_upper(out.values);
  return out;
}

std::vector<std::vector<double>> adjacent_cos(const FeatureDump& dump) {
  std::vector<std::vector<double>> out(dump.layers());
  for (std::size_t l = 1; l <= dump.layers(); ++l) {
    for (std::size_t i = 0; i < dump.samples(); ++i) {
      auto a = dump.feature(l - 1, i);
      auto b = dump.feature(l, i);
      if (is_zero(a) || is_zero(b)) continue;
      out[l - 1].push_back(cos_pair(a, b));
    }
  }
  return out;
}

std::vector<std::vector<double>> cos_to_layer(const FeatureDump& dump, std::size_t target) {
  if (target >= dump.layer_count()) throw IndexError("cos_to_layer: target layer out of range");
  std::vector<std::vector<double>> out(dump.layer_count());
  for (std::size_t l = 0; l < dump.layer_count(); ++l) {
    for (std::size_t i = 0; i < dump.samples(); ++i) {
      auto a = dump.feature(l, i);
      auto b = dump.feature(target, i);
      if (is_zero(a) || is_zero(b)) continue;
      out[l].push_back(cos_pair(a, b));
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> layer_predictions(const FeatureDump& dump) {
  if (!dump.has_classifier()) throw ConfigError("dump has no classifier");
  std::vector<std::vector<std::size_t>> out(dump.layer_count(), std::vector<std::size_t>(dump.samples()));
  for (std::size_t l = 0; l < dump.layer_count(); ++l)
    for (std::size_t i = 0; i < dump.samples(); ++i) out[l][i] = argmax(dump.logits(l, i));
  return out;
}

std::vector<double> layerwise_accuracy(const FeatureDump& dump) {
  const auto preds = layer_predictions(dump);
  std::vector<double> acc(dump.layer_count());
  for (std::size_t l = 0; l < acc.size(); ++l) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < dump.samples(); ++i) hits += preds[l][i] == dump.labels[i];
    acc[l] = static_cast<double>(hits) / static_cast<double>(dump.samples());
  }
  return acc;
}

SaturationProfile saturation_profile(const FeatureDump& dump) {
  const auto preds = layer_predictions(dump);
  const std::size_t L = dump.layers(), n = dump.samples();
  SaturationProfile prof;
  prof.layer.resize(n);
  prof.counts.assign(L + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t sat = L;
    while (sat > 1 && preds[sat - 1][i] == preds[L][i]) --sat;
    prof.layer[i] = sat;
    ++prof.counts[sat];
  }
  prof.cumulative.resize(L + 1);
  std::size_t run = 0;
  for (std::size_t l = 0; l <= L; ++l) prof.cumulative[l] = run += prof.counts[l];
  return prof;
}

std::size_t effective_depth(std::span<const double> accs, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("effective_depth: epsilon must lie in (0, 1)");
  if (accs.empty()) throw EmptyInputError("effective_depth: no layers");
  for (std::size_t l = 0; l < accs.size(); ++l)
    if (accs[l] >= 1.0 - epsilon) return l + 1;
  return accs.size();
}

double nc1(const Tensor& features, std::span<const std::size_t> labels) {
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("nc1: features must be [N x d] with one label per row");
  }
  const std::size_t n = features.rows(), d = features.cols();
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) throw DegenerateError("nc1: need at least two classes");

  std::vector<double> global(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) global[c] += features(i, c);
  for (auto& g : global) g /= static_cast<double>(n);

  Tensor within({d, d}), between({d, d});
  std::vector<double> mean(d), dev(d);
  for (const auto& [k, idx] : members) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (auto i : idx)
      for (std::size_t c = 0; c < d; ++c) mean[c] += features(i, c);
    for (auto& m : mean) m /= static_cast<double>(idx.size());
    for (auto i : idx) {
      for (std::size_t c = 0; c < d; ++c) dev[c] = features(i, c) - mean[c];
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) within(r, c) += dev[r] * dev[c];
    }
    for (std::size_t c = 0; c < d; ++c) dev[c] = mean[c] - global[c];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) between(r, c) += dev[r] * dev[c];
  }
  const double K = static_cast<double>(members.size());
  scale_inplace(within, 1.0 / static_cast<double>(n));
  scale_inplace(between, 1.0 / K);
  const Tensor pinv = symmetric_pinv(between, 1e-10);
  double tr = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) tr += within(r, c) * pinv(c, r);
  return std::max(0.0, tr / K);
}

Quantiles quantiles(std::vector<double> values) {
  if (values.empty()) throw EmptyInputError("quantiles: no values");
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

std::vector<NormRatioLayer> norm_ratio_stats(const model::ForwardTrace& trace) {
  if (!trace.residual) throw ConfigError("norm ratio needs a residual architecture");
  const std::size_t L = trace.layers();
  std::vector<NormRatioLayer> out(L);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t l = 1; l <= L; ++l) {
    std::vector<double> ratios;
    for (std::size_t i = 0; i < trace.samples; ++i) {
      const double skip = norm2(trace.features[l - 1].row(i));
      const double branch = norm2(trace.branches[l - 1].row(i));
      if (branch == 0.0) {
        ++out[l - 1].infinite_count;
      } else {
        ratios.push_back(skip / branch);
      }
    }
    out[l - 1].finite_count = ratios.size();
    out[l - 1].finite = ratios.empty() ? Quantiles{kInf, kInf, kInf, kInf, kInf} : quantiles(std::move(ratios));
  }
  return out;
}

std::vector<double> predicted_prob_curve(const FeatureDump& dump, std::size_t sample) {
  if (sample >= dump.samples()) throw IndexError("predicted_prob_curve: sample out of range");
  std::vector<double> out(dump.layer_count());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = softmax(dump.logits(l, sample))[dump.labels[sample]];
  return out;
}

}  // namespace layersim::metrics
