#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "layersim/checkpoint.hpp"
#include "layersim/error.hpp"
#include "layersim/exitsim.hpp"
#include "layersim/feature_dump.hpp"
#include "layersim/metrics.hpp"
#include "layersim/report.hpp"
#include "layersim/theory.hpp"

namespace layersim::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

fs::path output_dir(const CommonOptions& o, const fs::path& fallback = {}) {
  fs::path dir = !o.out.empty() ? fs::path(o.out) : (!fallback.empty() ? fallback : fs::path("."));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string content_hash(const fs::path& path) { return fnv1a_hex(read_bytes(path)); }

ExperimentConfig require_config(const CommonOptions& o) {
  if (o.config.empty()) throw UsageError("--config is required");
  return load_experiment(o.config);
}

std::string join_names(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
  return s;
}

std::vector<std::string> quantile_cells(const metrics::Quantiles& q) {
  return {format_double(q.min), format_double(q.q25), format_double(q.median), format_double(q.q75),
          format_double(q.max)};
}

// -------------------------------------------------------------------- gen-data

int cmd_gen_data(const CommonOptions& o, std::ostream& out) {
  auto cfg = require_config(o);
  if (!cfg.data.mixture) throw ConfigError("gen-data needs a data.mixture section");
  if (o.seed) cfg.data.mixture->seed = *o.seed;
  const auto ds = data::gen_mixture(*cfg.data.mixture);
  const auto dir = output_dir(o, cfg.outputs);
  data::write_idx(ds, dir / "images.idx", dir / "labels.idx");
  const Json spec = to_json(*cfg.data.mixture);
  const Metadata meta{"gen-data", config_hash(spec), cfg.data.mixture->seed};
  write_file(dir / "data.json", Json{{"meta", meta.to_json()}, {"mixture", spec}, {"samples", ds.size()}}.dump(2) + "\n");
  out << "wrote " << ds.size() << " samples (" << ds.seq_len() << " tokens x " << ds.input_dim() << ") to "
      << (dir / "images.idx").string() << "\n";
  return kOk;
}

// -------------------------------------------------------------------- train

std::vector<NamedTensor> head_extras(const train::MultiClassifierHead& head) {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < head.layers(); ++l) {
    out.push_back({"head." + std::to_string(l + 1) + ".weight", head.weights[l]});
    if (!head.biases[l].empty()) out.push_back({"head." + std::to_string(l + 1) + ".bias", head.biases[l]});
  }
  return out;
}

int cmd_train(const CommonOptions& o, std::ostream& out) {
  auto cfg = require_config(o);
  if (o.seed) cfg.train.seed = *o.seed;
  const auto ds = load_dataset(cfg);
  const Json resolved = cfg.to_json();
  const Metadata meta{"train", config_hash(resolved), cfg.train.seed};
  const auto dir = output_dir(o, cfg.outputs);

  Rng rng(cfg.train.seed);
  auto model = model::init_model(cfg.model, rng);
  std::vector<train::EpochLog> log;
  std::vector<NamedTensor> extras;
  if (cfg.train.loss_mode == train::LossMode::kMultiClassifier) {
    auto head = train::multi_head_from_shared(model);
    auto r = train::train_multi_classifier(std::move(model), std::move(head), ds, cfg.train, rng);
    model = std::move(r.model);
    extras = head_extras(r.head);
    log = std::move(r.log);
  } else {
    auto r = train::train(std::move(model), ds, cfg.train, rng);
    model = std::move(r.model);
    log = std::move(r.log);
  }

  save_checkpoint(dir / "checkpoint.json", model, extras, Json{{"meta", meta.to_json()}, {"experiment", resolved}});
  std::ostringstream csv;
  train::write_log_csv(csv, log, meta.comment_lines());
  write_file(dir / "train_log.csv", csv.str());
  write_file(dir / "config.json", Json{{"meta", meta.to_json()}, {"experiment", resolved}}.dump(2) + "\n");
  const auto& last = log.back();
  out << "trained " << train::loss_mode_name(cfg.train.loss_mode) << " for " << last.epoch << " epochs (" << last.steps
      << " steps), final loss " << format_double(last.mean_loss) << ", train accuracy "
      << format_double(last.accuracy) << "\n";
  return kOk;
}

// -------------------------------------------------------------------- dump

struct LoadedRun {
  Checkpoint ck;
  ExperimentConfig cfg;
  data::Dataset ds;
};

LoadedRun load_run(const std::string& checkpoint, const std::string& config_override) {
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  LoadedRun r;
  r.ck = load_checkpoint(checkpoint);
  if (!config_override.empty()) {
    r.cfg = load_experiment(config_override);
  } else {
    if (!r.ck.meta.contains("experiment")) throw ConfigError("checkpoint has no experiment record; pass --config");
    r.cfg = parse_experiment(r.ck.meta.at("experiment"), fs::path(checkpoint).parent_path());
  }
  r.ds = load_dataset(r.cfg);
  const auto& want = r.ck.model.config;
  if (want.seq_len != r.cfg.model.seq_len || want.input_dim != r.cfg.model.input_dim ||
      want.classes != r.cfg.model.classes) {
    throw ConfigError("dataset shape (" + std::to_string(r.cfg.model.seq_len) + " tokens x " +
                      std::to_string(r.cfg.model.input_dim) + ", " + std::to_string(r.cfg.model.classes) +
                      " classes) does not match the checkpoint (" + std::to_string(want.seq_len) + " x " +
                      std::to_string(want.input_dim) + ", " + std::to_string(want.classes) + ")");
  }
  // Multi-classifier runs report through their last-layer head.
  for (const auto& e : r.ck.extras) {
    const auto last = "head." + std::to_string(want.layers) + ".";
    if (e.name == last + "weight") r.ck.model.params.classifier_w = e.value;
    if (e.name == last + "bias") r.ck.model.params.classifier_b = e.value;
  }
  return r;
}

const std::vector<std::size_t>& split_indices(const data::Dataset& ds, const std::string& split,
                                              std::vector<std::size_t>& scratch) {
  if (split == "eval") return ds.eval_indices;
  if (split == "train") return ds.train_indices;
  if (split == "all") {
    scratch.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) scratch[i] = i;
    return scratch;
  }
  throw UsageError("--split must be one of eval, train, all");
}

std::uint64_t run_seed(const Checkpoint& ck) {
  return ck.meta.contains("meta") ? ck.meta["meta"].value("seed", std::uint64_t{0}) : 0;
}

int cmd_dump(const CommonOptions& o, const std::string& checkpoint, const std::string& split, std::ostream& out) {
  auto run = load_run(checkpoint, o.config);
  std::vector<std::size_t> scratch;
  const auto& idx = split_indices(run.ds, split, scratch);
  const auto dump = dump_features(run.ck.model, run.ds, idx);
  const auto dir = output_dir(o);
  const auto path = dir / ("features_" + split + ".rsdf");
  write_dump(path, dump);
  const Json params{{"experiment", run.cfg.to_json()}, {"checkpoint", content_hash(checkpoint)}, {"split", split}};
  const Metadata meta{"dump", config_hash(params), o.seed.value_or(run_seed(run.ck))};
  write_file(dir / ("features_" + split + ".json"),
             Json{{"meta", meta.to_json()},
                  {"file", path.filename().string()},
                  {"samples", dump.samples()},
                  {"layers_plus_one", dump.layer_count()},
                  {"dim", dump.dim()},
                  {"classes", dump.classes},
                  {"bias", !dump.classifier_b.empty()}}
                     .dump(2) +
                 "\n");
  out << "wrote " << path.string() << ": N=" << dump.samples() << " L+1=" << dump.layer_count()
      << " d=" << dump.dim() << " K=" << dump.classes << "\n";
  return kOk;
}

// -------------------------------------------------------------------- analyze

const std::vector<std::string> kAnalyses{"cos_matrix", "cka_matrix",      "adjacent_cos", "cos_to_last",
                                         "layer_accuracy", "saturation", "effective_depth", "nc1",
                                         "prob_curve",    "norm_ratio"};

int cmd_analyze(const CommonOptions& o, const std::string& dump_path, std::vector<std::string> names,
                const std::string& checkpoint, std::ostream& out) {
  std::vector<double> epsilons{0.1};
  if (!o.config.empty()) {
    const auto cfg = load_experiment(o.config);
    if (names.empty()) names = cfg.analyses;
    epsilons = cfg.epsilons;
  }
  if (names.empty()) throw UsageError("no analyses requested; valid names: " + join_names(kAnalyses));
  for (const auto& n : names) {
    if (std::find(kAnalyses.begin(), kAnalyses.end(), n) == kAnalyses.end()) {
      throw UsageError("unknown analysis '" + n + "'; valid names: " + join_names(kAnalyses));
    }
  }
  if (dump_path.empty()) throw UsageError("--dump is required");
  const auto dump = read_dump(fs::path(dump_path));
  const Json params{{"dump", content_hash(dump_path)}, {"analyses", names}, {"epsilons", epsilons}};
  const Metadata meta{"analyze", config_hash(params), o.seed.value_or(0)};
  const auto dir = output_dir(o);
  const std::size_t L = dump.layers();

  std::optional<FeatureDump> centered;
  auto centered_dump = [&]() -> const FeatureDump& {
    if (!centered) centered = metrics::center_features(dump);
    return *centered;
  };
  Json artifacts = Json::array();
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    artifacts.push_back(name);
  };
  auto table = [&](const std::string& name, const std::vector<std::string>& cols,
                   const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream s;
    write_table_csv(s, cols, rows, meta);
    emit(name, s.str());
  };
  auto matrix = [&](const std::string& stem, const metrics::SimilarityMatrix& m, double lo, double hi) {
    std::ostringstream csv, svg;
    write_matrix_csv(csv, m.values, meta);
    write_heatmap_svg(svg, m.values, lo, hi, stem, meta);
    emit(stem + ".csv", csv.str());
    emit(stem + ".svg", svg.str());
  };
  Json summary = Json::object();

  for (const auto& n : names) {
    if (n == "cos_matrix") {
      const auto m = metrics::cos_matrix(centered_dump());
      matrix("cos_matrix", m, -1.0, 1.0);
      summary["cos_matrix"] = {{"skipped", m.skipped}};
    } else if (n == "cka_matrix") {
      matrix("cka_matrix", metrics::cka_matrix(dump), 0.0, 1.0);
    } else if (n == "adjacent_cos" || n == "cos_to_last") {
      const bool adj = n == "adjacent_cos";
      const auto per = adj ? metrics::adjacent_cos(centered_dump()) : metrics::cos_to_layer(centered_dump(), L);
      std::vector<std::vector<std::string>> rows;
      for (std::size_t l = 0; l < per.size(); ++l) {
        std::vector<std::string> row{std::to_string(adj ? l + 1 : l), std::to_string(per[l].size())};
        if (per[l].empty()) {
          row.insert(row.end(), 5, "nan");
        } else {
          const auto q = quantile_cells(metrics::quantiles(per[l]));
          row.insert(row.end(), q.begin(), q.end());
        }
        rows.push_back(row);
      }
      table(n + ".csv", {"layer", "count", "min", "q25", "median", "q75", "max"}, rows);
    } else if (n == "layer_accuracy") {
      const auto acc = metrics::layerwise_accuracy(dump);
      std::vector<std::vector<std::string>> rows;
      for (std::size_t l = 0; l < acc.size(); ++l) rows.push_back({std::to_string(l), format_double(acc[l])});
      table("layer_accuracy.csv", {"layer", "accuracy"}, rows);
      summary["final_accuracy"] = acc.back();
    } else if (n == "saturation") {
      const auto p = metrics::saturation_profile(dump);
      std::vector<std::vector<std::string>> rows;
      for (std::size_t l = 1; l <= L; ++l)
        rows.push_back({std::to_string(l), std::to_string(p.counts[l]), std::to_string(p.cumulative[l])});
      table("saturation.csv", {"layer", "count", "cumulative"}, rows);
    } else if (n == "effective_depth") {
      const auto acc = metrics::layerwise_accuracy(dump);
      const std::vector<double> body(acc.begin() + 1, acc.end());
      std::vector<std::vector<std::string>> rows;
      Json depths = Json::array();
      for (double e : epsilons) {
        const auto d = metrics::effective_depth(body, e);
        rows.push_back({format_double(e), std::to_string(d)});
        depths.push_back({{"epsilon", e}, {"depth", d}});
      }
      table("effective_depth.csv", {"epsilon", "depth"}, rows);
      summary["effective_depth"] = depths;
    } else if (n == "nc1") {
      std::vector<std::vector<std::string>> rows;
      for (std::size_t l = 0; l <= L; ++l) {
        std::string v;
        try {
          v = format_double(metrics::nc1(dump.layer(l), dump.labels));
        } catch (const DegenerateError&) {
          v = "nan";
        }
        rows.push_back({std::to_string(l), v});
      }
      table("nc1.csv", {"layer", "nc1"}, rows);
    } else if (n == "prob_curve") {
      std::vector<std::vector<double>> per(L + 1);
      for (std::size_t i = 0; i < dump.samples(); ++i) {
        const auto c = metrics::predicted_prob_curve(dump, i);
        for (std::size_t l = 0; l <= L; ++l) per[l].push_back(c[l]);
      }
      std::vector<std::vector<std::string>> rows;
      for (std::size_t l = 0; l <= L; ++l) {
        double mean = 0.0;
        for (double v : per[l]) mean += v;
        mean /= static_cast<double>(per[l].size());
        rows.push_back({std::to_string(l), format_double(mean), format_double(metrics::quantiles(per[l]).median)});
      }
      table("prob_curve.csv", {"layer", "mean", "median"}, rows);
    } else if (n == "norm_ratio") {
      auto run = load_run(checkpoint, "");
      const auto trace = model::forward_with_trace(run.ck.model, data::gather(run.ds, run.ds.eval_indices));
      const auto stats = metrics::norm_ratio_stats(trace);
      std::vector<std::vector<std::string>> rows;
      for (std::size_t l = 0; l < stats.size(); ++l) {
        std::vector<std::string> row{std::to_string(l + 1), std::to_string(stats[l].finite_count),
                                     std::to_string(stats[l].infinite_count)};
        const auto q = quantile_cells(stats[l].finite);
        row.insert(row.end(), q.begin(), q.end());
        rows.push_back(row);
      }
      table("norm_ratio.csv", {"block", "finite", "infinite", "min", "q25", "median", "q75", "max"}, rows);
    }
  }
  const Json report{{"meta", meta.to_json()},
                    {"dump", {{"samples", dump.samples()}, {"layers", L}, {"dim", dump.dim()}, {"classes", dump.classes}}},
                    {"artifacts", artifacts},
                    {"summary", summary}};
  write_file(dir / "report.json", report.dump(2) + "\n");
  out << "wrote " << artifacts.size() << " artifacts to " << dir.string() << "\n";
  return kOk;
}

// -------------------------------------------------------------------- exit-sim

int cmd_exit_sim(const CommonOptions& o, const std::string& dump_path, std::vector<double> taus, std::ostream& out) {
  if (taus.empty() && !o.config.empty()) taus = load_experiment(o.config).taus;
  if (taus.empty()) taus = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0};
  if (dump_path.empty()) throw UsageError("--dump is required");
  const auto dump = read_dump(fs::path(dump_path));
  const auto rows = exitsim::threshold_sweep(dump, taus);
  const Json params{{"dump", content_hash(dump_path)}, {"taus", taus}};
  const Metadata meta{"exit-sim", config_hash(params), o.seed.value_or(0)};
  const auto dir = output_dir(o);
  std::ostringstream csv;
  exitsim::write_pareto_csv(csv, rows, dump.layers(), meta.comment_lines());
  write_file(dir / "pareto.csv", csv.str());
  for (const auto& r : rows) {
    out << "tau " << format_double(r.threshold) << ": accuracy " << format_double(r.accuracy) << ", speedup "
        << r.speedup.num << "/" << r.speedup.den << "\n";
  }
  return kOk;
}

// -------------------------------------------------------------------- verify-theory

int cmd_verify_theory(const CommonOptions& o, std::size_t trials, std::size_t dim, std::ostream& out) {
  if (trials < 1) throw UsageError("--trials must be at least 1");
  if (dim < 10) throw UsageError("--dim must be at least 10");
  const std::uint64_t seed = o.seed.value_or(0);
  Rng rng(seed);
  const auto grid = theory::uniform_grid(100);

  std::size_t monotone = 0;
  double t1_min = INFINITY;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto r = theory::verify_cos_monotone(
        theory::make_path(theory::random_unit(dim, rng), theory::random_unit(dim, rng), grid));
    monotone += r.monotone;
    t1_min = std::min(t1_min, r.min_increment);
  }
  const Json t1{{"trials", trials}, {"dim", dim}, {"grid_points", grid.size()}, {"monotone", monotone},
                {"min_increment", t1_min}, {"pass", monotone == trials}};

  const auto pg = theory::sweep_p_quadratic(0.01);
  const Json p{{"step", 0.01}, {"points", pg.points}, {"min_value", pg.min_value}, {"argmin_c", pg.argmin_c},
               {"argmin_x", pg.argmin_x}, {"max_abs_at_one", pg.max_abs_at_one}, {"pass", pg.pass}};

  Json per_k = Json::array();
  bool t2_pass = true;
  for (std::size_t k_classes : {std::size_t{2}, std::size_t{3}, std::size_t{10}}) {
    const auto etf = theory::make_etf(k_classes, dim, rng);
    std::size_t ok = 0;
    double min_true = INFINITY, max_other = -INFINITY;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto k = rng.uniform_index(k_classes);
      const double norm = rng.uniform(0.5, 4.0);
      const auto r = theory::verify_softmax_monotone(etf, k, theory::random_softmax_path_start(etf, k, norm, rng), norm, grid);
      ok += r.true_class_increasing && r.others_decreasing;
      min_true = std::min(min_true, r.min_true_increment);
      max_other = std::max(max_other, r.max_other_increment);
    }
    t2_pass &= ok == trials;
    per_k.push_back({{"classes", k_classes}, {"trials", trials}, {"passed", ok},
                     {"min_true_increment", min_true}, {"max_other_increment", max_other}});
  }
  const Json t2{{"dim", dim}, {"per_classes", per_k}, {"pass", t2_pass}};

  // End-to-end through the metrics on a synthesized dump.
  const auto dump = theory::synthesize_geodesic_dump(64, 8, dim, 5, rng);
  bool curves = true;
  for (std::size_t i = 0; i < dump.samples(); ++i) {
    const auto c = metrics::predicted_prob_curve(dump, i);
    for (std::size_t l = 1; l < c.size(); ++l) curves &= c[l] > c[l - 1];
  }
  const auto cos = metrics::cos_matrix(dump);
  bool rows_monotone = true;
  for (std::size_t r = 0; r < cos.values.rows(); ++r) {
    for (std::size_t c = 1; c <= r; ++c) rows_monotone &= cos.values(r, c) >= cos.values(r, c - 1) - 1e-12;
    for (std::size_t c = r; c + 1 < cos.values.cols(); ++c) rows_monotone &= cos.values(r, c) >= cos.values(r, c + 1) - 1e-12;
  }
  const Json synth{{"samples", 64}, {"layers", 8}, {"prob_curves_increasing", curves},
                   {"cos_rows_monotone", rows_monotone}, {"pass", curves && rows_monotone}};

  const bool pass = t1["pass"] && p["pass"] && t2_pass && curves && rows_monotone;
  const Json params{{"trials", trials}, {"dim", dim}};
  const Metadata meta{"verify-theory", config_hash(params), seed};
  const Json report{{"meta", meta.to_json()}, {"cos_geodesic", t1},    {"p_grid", p},
                    {"softmax_path", t2},         {"synthesized", synth}, {"pass", pass}};
  if (!o.out.empty()) {
    const auto dir = output_dir(o);
    write_file(dir / "theory.json", report.dump(2) + "\n");
  }
  out << report.dump(2) << "\n";
  return kOk;
}

// -------------------------------------------------------------------- param-count

int cmd_param_count(const CommonOptions& o, std::optional<std::size_t> layers, std::optional<std::size_t> classes,
                    std::optional<std::size_t> dim, std::ostream& out) {
  Json report;
  Json params;
  if (!o.config.empty()) {
    auto cfg = load_experiment(o.config);
    if (layers) cfg.model.layers = *layers;
    if (classes) cfg.model.classes = *classes;
    if (dim) cfg.model.dim = *dim;
    cfg.model.validate();
    const auto& m = cfg.model;
    const auto shared = model::parameter_count(m);
    const auto extra = exitsim::classifier_param_overhead(m.layers, m.classes, m.dim, m.use_bias);
    params = to_json(m);
    report = {{"model", params},
              {"shared_classifier", shared},
              {"multi_classifier", shared + extra},
              {"overhead", extra}};
  } else {
    if (!layers || !classes || !dim) throw UsageError("param-count needs --config or all of --layers, --classes, --dim");
    params = {{"layers", *layers}, {"classes", *classes}, {"dim", *dim}};
    report = {{"layers", *layers},
              {"classes", *classes},
              {"dim", *dim},
              {"overhead", exitsim::classifier_param_overhead(*layers, *classes, *dim, false)},
              {"overhead_with_bias", exitsim::classifier_param_overhead(*layers, *classes, *dim, true)}};
  }
  report["meta"] = Metadata{"param-count", config_hash(params), o.seed.value_or(0)}.to_json();
  if (!o.out.empty()) write_file(output_dir(o) / "param_count.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kOk;
}

std::vector<double> parse_taus(const std::string& text) {
  std::vector<double> taus;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      taus.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("--taus: '" + item + "' is not a number");
    }
  }
  return taus;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> names;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) names.push_back(item);
  return names;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kNumerical:
    case ErrorKind::kDegenerate: return kNumericalError;
    default: return kDataError;
  }
}

}  // namespace

const std::vector<std::string>& analysis_names() { return kAnalyses; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer-wise representation similarity lab", "layersim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool config = true) {
    if (config) sub->add_option("--config", common.config, "Experiment config (JSON)");
    sub->add_option("--seed", common.seed, "Seed override");
    sub->add_option("--out", common.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "Write a Gaussian-mixture dataset as IDX files");
  add_common(gen);
  auto* trn = app.add_subcommand("train", "Train a model and write a checkpoint and log");
  add_common(trn);

  std::string checkpoint, split = "eval", dump_path, analyses, taus;
  auto* dmp = app.add_subcommand("dump", "Write per-layer readout features (RSDF)");
  add_common(dmp);
  dmp->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required();
  dmp->add_option("--split", split, "eval, train or all");

  auto* ana = app.add_subcommand("analyze", "Similarity, accuracy and saturation reports from a dump");
  add_common(ana);
  ana->add_option("--dump", dump_path, "Feature dump")->required();
  ana->add_option("--analyses", analyses, "Comma-separated analyses");
  ana->add_option("--checkpoint", checkpoint, "Checkpoint (needed by norm_ratio)");

  auto* ext = app.add_subcommand("exit-sim", "Early-exit threshold sweep");
  add_common(ext);
  ext->add_option("--dump", dump_path, "Feature dump")->required();
  ext->add_option("--taus", taus, "Comma-separated thresholds");

  std::size_t trials = 1000, dim = 64;
  auto* thy = app.add_subcommand("verify-theory", "Numerical checks of the two monotonicity properties");
  add_common(thy, false);
  thy->add_option("--trials", trials, "Random paths per sweep");
  thy->add_option("--dim", dim, "Ambient dimension");

  std::optional<std::size_t> pc_layers, pc_classes, pc_dim;
  auto* pc = app.add_subcommand("param-count", "Parameter counts and multi-classifier overhead");
  add_common(pc);
  pc->add_option("--layers", pc_layers);
  pc->add_option("--classes", pc_classes);
  pc->add_option("--dim", pc_dim);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(common, out);
    if (*trn) return cmd_train(common, out);
    if (*dmp) return cmd_dump(common, checkpoint, split, out);
    if (*ana) return cmd_analyze(common, dump_path, parse_names(analyses), checkpoint, out);
    if (*ext) return cmd_exit_sim(common, dump_path, taus.empty() ? std::vector<double>{} : parse_taus(taus), out);
    if (*thy) return cmd_verify_theory(common, trials, dim, out);
    if (*pc) return cmd_param_count(common, pc_layers, pc_classes, pc_dim, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace layersim::cli
