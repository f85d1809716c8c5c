#include "layersim/exitsim.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"
#include "layersim/report.hpp"

namespace layersim::exitsim {

void ExitPolicy::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("exit threshold must lie in (0, 1]");
}

Rational speedup(std::span<const std::size_t> counts, std::size_t layers) {
  if (counts.size() != layers) throw DimensionError("speedup: expected one count per layer");
  std::uint64_t total = 0, weighted = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    total += counts[i];
    weighted += static_cast<std::uint64_t>(i + 1) * counts[i];
  }
  if (total == 0) throw EmptyInputError("speedup: empty exit histogram");
  std::uint64_t num = static_cast<std::uint64_t>(layers) * total, den = weighted;
  const std::uint64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

ExitReport run_early_exit(const FeatureDump& dump, const ExitPolicy& policy) {
  policy.validate();
  if (!dump.has_classifier()) throw ConfigError("early exit needs a classifier in the dump");
  const std::size_t L = dump.layers(), n = dump.samples();
  if (L < 1) throw ConfigError("early exit needs at least one block");
  ExitReport rep;
  rep.exit_layer.resize(n);
  rep.predictions.resize(n);
  rep.counts.assign(L, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t exit = L;
    std::vector<double> probs;
    for (std::size_t l = 1; l <= L; ++l) {
      probs = softmax(dump.logits(l, i));
      if (*std::max_element(probs.begin(), probs.end()) >= policy.threshold) {
        exit = l;
        break;
      }
    }
    rep.exit_layer[i] = exit;
    rep.predictions[i] = argmax(probs);
    ++rep.counts[exit - 1];
    hits += rep.predictions[i] == dump.labels[i];
  }
  rep.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  rep.speedup = speedup(rep.counts, L);
  return rep;
}

std::uint64_t classifier_param_overhead(std::uint64_t layers, std::uint64_t classes, std::uint64_t dim,
                                        bool with_bias) {
  if (layers == 0 || classes == 0 || dim == 0) throw ConfigError("parameter overhead needs positive sizes");
  const std::uint64_t per_classifier = classes * dim + (with_bias ? classes : 0);
  return (layers - 1) * per_classifier;
}

std::vector<SweepRow> threshold_sweep(const FeatureDump& dump, std::span<const double> thresholds) {
  if (thresholds.empty()) throw EmptyInputError("threshold sweep: empty grid");
  std::vector<SweepRow> rows;
  for (double tau : thresholds) {
    const auto rep = run_early_exit(dump, ExitPolicy{tau});
    rows.push_back({tau, rep.accuracy, rep.speedup, rep.counts});
  }
  return rows;
}

void write_pareto_csv(std::ostream& out, const std::vector<SweepRow>& rows, std::size_t layers,
                      const std::vector<std::string>& header) {
  for (const auto& h : header) out << "# " << h << "\n";
  out << "tau,accuracy,speedup,speedup_num,speedup_den";
  for (std::size_t i = 1; i <= layers; ++i) out << ",m" << i;
  out << "\n";
  for (const auto& r : rows) {
    out << format_double(r.threshold) << ',' << format_double(r.accuracy) << ',' << format_double(r.speedup.value()) << ',' << r.speedup.num << ','
        << r.speedup.den;
    for (auto c : r.counts) out << ',' << c;
    out << "\n";
  }
}

}  // namespace layersim::exitsim
