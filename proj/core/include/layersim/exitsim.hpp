#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "layersim/feature_dump.hpp"

namespace layersim::exitsim {

/// Exit as soon as max softmax probability reaches `threshold`.
struct ExitPolicy {
  double threshold = 0.9;
  void validate() const;  // 0 < threshold ≤ 1
};

/// Reduced fraction num/den.
struct Rational {
  std::uint64_t num = 0, den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct ExitReport {
  std::vector<std::size_t> exit_layer;   // per sample, in [1, L]
  std::vector<std::size_t> predictions;  // argmax at the exit layer
  std::vector<std::size_t> counts;       // counts[i−1] = m^i, i = 1..L
  double accuracy = 0.0;
  Rational speedup;
};

/// Σ_i L·m^i / Σ_i i·m^i with counts[i−1] = m^i. EmptyInputError when Σm = 0.
Rational speedup(std::span<const std::size_t> counts, std::size_t layers);

ExitReport run_early_exit(const FeatureDump& dump, const ExitPolicy& policy);

/// Parameters added by giving every layer its own K×d classifier (+K bias)
/// instead of sharing one: (L−1)·K·d (+ (L−1)·K).
std::uint64_t classifier_param_overhead(std::uint64_t layers, std::uint64_t classes, std::uint64_t dim,
                                        bool with_bias);

struct SweepRow {
  double threshold = 0.0;
  double accuracy = 0.0;
  Rational speedup;
  std::vector<std::size_t> counts;
};

std::vector<SweepRow> threshold_sweep(const FeatureDump& dump, std::span<const double> thresholds);

/// CSV columns: tau, accuracy, speedup, speedup_num, speedup_den, m1..mL.
void write_pareto_csv(std::ostream& out, const std::vector<SweepRow>& rows, std::size_t layers,
                      const std::vector<std::string>& header = {});

}  // namespace layersim::exitsim
