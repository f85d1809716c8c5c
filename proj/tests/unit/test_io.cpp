#include <doctest.h>

#include <fstream>
#include <cstdio>
#include <sstream>

#include "layersim/checkpoint.hpp"
#include "layersim/config_json.hpp"
#include "layersim/error.hpp"
#include "layersim/feature_dump.hpp"
#include "layersim/numerics.hpp"
#include "layersim/report.hpp"
#include "test_support.hpp"

using namespace layersim;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("feature_dump") {
  TEST_CASE("round trip is bit-identical with and without bias") {
    Rng rng(1);
    for (bool bias : {true, false}) {
      auto d = testsupport::random_dump(7, 3, 5, 4, rng);
      if (!bias) d.classifier_b = Tensor{};
      std::stringstream buf;
      write_dump(buf, d);
      CHECK(buf.str().size() == 4 + 6 * 4 + 7 * 4 + (20 + (bias ? 4 : 0) + 4 * 7 * 5) * 8);
      const auto back = read_dump(buf);
      CHECK(back == d);
    }
  }

  TEST_CASE("header fields and corruption") {
    Rng rng(2);
    const auto d = testsupport::random_dump(3, 2, 4, 2, rng);
    std::stringstream buf;
    write_dump(buf, d);
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "RSDF");
    auto u32 = [&](std::size_t at) {
      return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at])) |
             static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 1])) << 8 |
             static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 2])) << 16 |
             static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 3])) << 24;
    };
    CHECK(u32(4) == 1);
    CHECK(u32(8) == 3);
    CHECK(u32(12) == 3);
    CHECK(u32(16) == 4);
    CHECK(u32(20) == 2);
    CHECK(u32(24) == 1);

    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream b1(bad);
    CHECK_THROWS_AS(read_dump(b1), FormatError);
    std::stringstream b2(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_dump(b2), FormatError);
    std::stringstream b3(bytes + "x");
    CHECK_THROWS_AS(read_dump(b3), FormatError);
  }

  TEST_CASE("dumped logits match the live model") {
    const auto cfg = testsupport::tiny_config(model::Arch::kTransformer);
    Rng rng(3);
    auto m = model::init_model(cfg, rng);
    for (auto& v : m.params.classifier_b.data()) v = rng.normal();
    data::Dataset ds;
    ds.samples = testsupport::random_batch(cfg, 10, rng);
    ds.labels = testsupport::cyclic_labels(10, cfg.classes);
    ds.classes = cfg.classes;
    std::vector<std::size_t> idx{0, 2, 4, 6, 8, 9};
    const auto dump = dump_features(m, ds, idx, 4);
    CHECK(dump.samples() == 6);
    CHECK(dump.layer_count() == cfg.layers + 1);
    CHECK(dump.dim() == cfg.dim);
    const auto trace = model::forward_with_trace(m, data::gather(ds, idx));
    for (std::size_t l = 0; l <= cfg.layers; ++l)
      for (std::size_t i = 0; i < 6; ++i) {
        const auto lg = dump.logits(l, i);
        for (std::size_t k = 0; k < cfg.classes; ++k) CHECK(std::abs(lg[k] - trace.logits[l](i, k)) < 1e-12);
      }
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-identical including extras and meta") {
    const auto dir = testsupport::scratch_dir("ckpt");
    for (auto arch : {model::Arch::kTransformer, model::Arch::kMlpSkip, model::Arch::kMlpNoSkip}) {
      const auto cfg = testsupport::tiny_config(arch);
      Rng rng(4);
      const auto m = model::init_model(cfg, rng);
      std::vector<NamedTensor> extras{{"head.0.weight", random_normal({3, 8}, 1.0, rng)}};
      save_checkpoint(dir / "m.json", m, extras, Json{{"seed", 4}});
      const auto ck = load_checkpoint(dir / "m.json");
      CHECK(ck.model.config == cfg);
      std::vector<Tensor> a, b;
      m.params.for_each([&](const std::string&, const Tensor& t) { a.push_back(t); });
      ck.model.params.for_each([&](const std::string&, const Tensor& t) { b.push_back(t); });
      CHECK(a == b);
      CHECK(ck.extras == extras);
      CHECK(ck.meta["seed"] == 4);
      // Saving again gives identical bytes.
      const auto first = slurp(dir / "m.bin");
      save_checkpoint(dir / "m2.json", ck.model, ck.extras, ck.meta);
      CHECK(slurp(dir / "m2.bin") == first);
    }
  }

  TEST_CASE("damaged checkpoints are rejected") {
    const auto dir = testsupport::scratch_dir("ckpt_bad");
    const auto cfg = testsupport::tiny_config(model::Arch::kMlpSkip);
    Rng rng(5);
    save_checkpoint(dir / "m.json", model::init_model(cfg, rng));
    {
      std::ofstream out(dir / "m.bin", std::ios::binary | std::ios::app);
      out << "junk";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "m.json"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "none.json"), IoError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("round trips and strictness") {
    model::ModelConfig mc;
    mc.layers = 5;
    mc.arch = model::Arch::kMlpNoSkip;
    CHECK(model_config_from_json(to_json(mc)) == mc);
    train::TrainConfig tc;
    tc.loss_mode = train::LossMode::kCeReg;
    tc.seed = 123456789012345ULL;
    CHECK(train_config_from_json(to_json(tc)) == tc);
    data::MixtureSpec ms;
    ms.classes = 7;
    const auto back = mixture_spec_from_json(to_json(ms));
    CHECK(back.classes == 7);

    CHECK_THROWS_AS(model_config_from_json(Json{{"layerz", 3}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(Json{{"layers", "three"}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(Json{{"layers", -1}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(Json{{"loss_mode", "fancy"}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(Json::array()), ConfigError);
  }

  TEST_CASE("hash is stable and key-order independent") {
    const auto a = Json::parse(R"({"b": 1, "a": [1, 2]})");
    const auto b = Json::parse(R"({"a": [1, 2], "b": 1})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    // FNV-1a 64 of "{}" by hand.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : std::string("{}")) h = (h ^ c) * 0x100000001b3ULL;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    CHECK(config_hash(Json::object()) == std::string(hex));
    CHECK(config_hash(a) != config_hash(Json{{"b", 2}}));
  }
}

TEST_SUITE("report") {
  TEST_CASE("ramp endpoints and midpoints") {
    CHECK(ramp_color(0.0) == "#440154");
    CHECK(ramp_color(1.0) == "#fde725");
    CHECK(ramp_color(-3.0) == "#440154");
    CHECK(ramp_color(3.0 / 7.0) == "#277f8e");
  }

  TEST_CASE("matrix CSV and SVG shape") {
    const Metadata meta{"analyze", "0123456789abcdef", 9};
    const auto m = Tensor::matrix({{1, 0.5}, {0.5, 1}});
    std::ostringstream csv;
    write_matrix_csv(csv, m, meta);
    const auto s = csv.str();
    CHECK(s.find("# config_hash: 0123456789abcdef\n") != std::string::npos);
    CHECK(s.find("layer,0,1\n0,1,0.5\n1,0.5,1\n") != std::string::npos);
    std::ostringstream svg;
    write_heatmap_svg(svg, m, -1, 1, "cos", meta);
    const auto v = svg.str();
    std::size_t rects = 0;
    for (auto p = v.find("<rect"); p != std::string::npos; p = v.find("<rect", p + 1)) ++rects;
    CHECK(rects == 4);
    CHECK(v.find("fill=\"#fde725\"") != std::string::npos);
    std::ostringstream again;
    write_heatmap_svg(again, m, -1, 1, "cos", meta);
    CHECK(again.str() == v);
  }

  TEST_CASE("format_double round trips") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0}) CHECK(std::stod(format_double(x)) == x);
  }
}
