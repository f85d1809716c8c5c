#include "experiment.hpp"

#include <fstream>

#include "layersim/error.hpp"

namespace layersim::cli {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
std::vector<T> list_of(const Json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string(key) + ": expected an array");
  try {
    return j.get<std::vector<T>>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(key) + ": wrong element type");
  }
}

}  // namespace

ExperimentConfig parse_experiment(const Json& doc, const std::filesystem::path& base_dir) {
  require_known_keys(doc, "config", {"model", "train", "data", "outputs", "analyses", "exit", "effective_depth"});
  ExperimentConfig c;
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    c.model = model_config_from_json(m);
    c.has_seq_len = m.contains("seq_len");
    c.has_input_dim = m.contains("input_dim");
    c.has_classes = m.contains("classes");
  }
  if (doc.contains("train")) c.train = train_config_from_json(doc.at("train"));
  if (!doc.contains("data")) throw ConfigError("config: 'data' is required");
  const auto& d = doc.at("data");
  require_known_keys(d, "data", {"mixture", "idx", "eval_fraction", "split_seed"});
  if (d.contains("mixture") == d.contains("idx")) throw ConfigError("data: give exactly one of 'mixture' or 'idx'");
  if (d.contains("mixture")) {
    c.data.mixture = mixture_spec_from_json(d.at("mixture"));
  } else {
    const auto& idx = d.at("idx");
    require_known_keys(idx, "data.idx", {"images", "labels", "patch"});
    if (!idx.contains("images") || !idx.contains("labels")) throw ConfigError("data.idx: need 'images' and 'labels'");
    c.data.images = resolve(base_dir, idx.at("images").get<std::string>());
    c.data.labels = resolve(base_dir, idx.at("labels").get<std::string>());
    c.data.patch = idx.value("patch", std::size_t{7});
  }
  c.data.eval_fraction = d.value("eval_fraction", 0.2);
  if (!(c.data.eval_fraction > 0.0 && c.data.eval_fraction < 1.0)) {
    throw ConfigError("data.eval_fraction must lie in (0, 1)");
  }
  c.data.split_seed = d.value("split_seed", std::uint64_t{0});
  if (doc.contains("outputs")) c.outputs = resolve(base_dir, doc.at("outputs").get<std::string>());
  if (doc.contains("analyses")) c.analyses = list_of<std::string>(doc.at("analyses"), "analyses");
  if (doc.contains("exit")) {
    require_known_keys(doc.at("exit"), "exit", {"taus"});
    if (doc.at("exit").contains("taus")) c.taus = list_of<double>(doc.at("exit").at("taus"), "exit.taus");
  }
  if (doc.contains("effective_depth")) {
    require_known_keys(doc.at("effective_depth"), "effective_depth", {"epsilons"});
    if (doc.at("effective_depth").contains("epsilons")) {
      c.epsilons = list_of<double>(doc.at("effective_depth").at("epsilons"), "effective_depth.epsilons");
    }
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return parse_experiment(doc, std::filesystem::absolute(path).parent_path());
}

Json ExperimentConfig::to_json() const {
  Json d;
  if (data.mixture) {
    d["mixture"] = layersim::to_json(*data.mixture);
  } else {
    d["idx"] = {{"images", data.images.string()}, {"labels", data.labels.string()}, {"patch", data.patch}};
  }
  d["eval_fraction"] = data.eval_fraction;
  d["split_seed"] = data.split_seed;
  Json j{{"model", layersim::to_json(model)}, {"train", layersim::to_json(train)}, {"data", d}};
  if (!outputs.empty()) j["outputs"] = outputs.string();
  if (!analyses.empty()) j["analyses"] = analyses;
  if (!taus.empty()) j["exit"] = {{"taus", taus}};
  j["effective_depth"] = {{"epsilons", epsilons}};
  return j;
}

data::Dataset load_dataset(ExperimentConfig& config) {
  data::Dataset ds;
  if (config.data.mixture) {
    ds = data::gen_mixture(*config.data.mixture);
  } else {
    for (const auto& p : {config.data.images, config.data.labels}) {
      if (!std::filesystem::exists(p)) throw IoError("data file not found: '" + p.string() + "'");
    }
    ds = data::load_idx(config.data.images, config.data.labels, config.data.patch);
  }
  auto reconcile = [](bool given, std::size_t& field, std::size_t actual, const char* name) {
    if (given && field != actual) {
      throw ConfigError(std::string("model.") + name + " = " + std::to_string(field) + " but the data has " +
                        std::to_string(actual));
    }
    field = actual;
  };
  reconcile(config.has_seq_len, config.model.seq_len, ds.seq_len(), "seq_len");
  reconcile(config.has_input_dim, config.model.input_dim, ds.input_dim(), "input_dim");
  if (config.has_classes) {
    if (config.model.classes < ds.classes) {
      throw ConfigError("model.classes = " + std::to_string(config.model.classes) + " but the data has labels up to " +
                        std::to_string(ds.classes - 1));
    }
    ds.classes = config.model.classes;
  } else {
    config.model.classes = ds.classes;
  }
  config.has_seq_len = config.has_input_dim = config.has_classes = true;
  config.model.validate();
  return data::split(std::move(ds), config.data.eval_fraction, config.data.split_seed);
}

}  // namespace layersim::cli
