#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layersim/config_json.hpp"
#include "layersim/datasets.hpp"
#include "layersim/model.hpp"
#include "layersim/training.hpp"

namespace layersim::cli {

struct DataSource {
  std::optional<data::MixtureSpec> mixture;
  std::filesystem::path images, labels;  // IDX pair when no mixture is given
  std::size_t patch = 7;
  double eval_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  DataSource data;
  std::filesystem::path outputs;
  std::vector<std::string> analyses;
  std::vector<double> taus;
  std::vector<double> epsilons{0.1};

  // Which model keys were given explicitly; the rest are inferred from data.
  bool has_seq_len = false, has_input_dim = false, has_classes = false;

  /// Canonical JSON (paths absolute). Hashing this identifies the run.
  Json to_json() const;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment(const Json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Generates or loads the dataset, applies the split, and fills in model
/// dimensions left unspecified. ConfigError if explicit dimensions disagree.
data::Dataset load_dataset(ExperimentConfig& config);

}  // namespace layersim::cli
