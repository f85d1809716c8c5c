#include "layersim/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <cstring>
#include <map>

#include "layersim/error.hpp"

namespace layersim {

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& manifest, const model::Model& model,
                     const std::vector<NamedTensor>& extras, const Json& meta) {
  Json entries = Json::array();
  std::vector<std::uint64_t> blob;
  auto append = [&](const std::string& name, const Tensor& t) {
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", blob.size() * 8},
                       {"count", t.size()}});
    for (double v : t.data()) blob.push_back(to_le(std::bit_cast<std::uint64_t>(v)));
  };
  model.params.for_each([&](const std::string& name, const Tensor& t) { append(name, t); });
  for (const auto& e : extras) append(e.name, e.value);

  const auto blob_file = blob_path(manifest);
  Json doc{{"format", "layersim-checkpoint"},
           {"version", 1},
           {"config", to_json(model.config)},
           {"meta", meta},
           {"blob", blob_file.filename().string()},
           {"blob_bytes", blob.size() * 8},
           {"parameters", entries}};
  {
    std::ofstream out(blob_file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + blob_file.string() + "'");
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * 8));
    if (!out) throw IoError("write failed for '" + blob_file.string() + "'");
  }
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + manifest.string() + "'");
  out << doc.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open checkpoint '" + manifest.string() + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(manifest.string() + ": invalid JSON (" + e.what() + ")");
  }
  if (doc.value("format", "") != "layersim-checkpoint" || doc.value("version", 0) != 1) {
    throw FormatError(manifest.string() + ": not a version-1 layersim checkpoint");
  }
  Checkpoint ck;
  try {
    ck.model.config = model_config_from_json(doc.at("config"));
  } catch (const Json::exception& e) {
    throw FormatError(manifest.string() + ": missing config");
  }
  ck.meta = doc.value("meta", Json::object());

  const auto blob_file = manifest.parent_path() / doc.value("blob", std::string());
  std::ifstream bin(blob_file, std::ios::binary);
  if (!bin) throw IoError("cannot open checkpoint blob '" + blob_file.string() + "'");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() != doc.value("blob_bytes", std::size_t{0})) throw FormatError("checkpoint blob size mismatch");

  std::map<std::string, Tensor> loaded;
  std::vector<std::string> order;
  for (const auto& e : doc.at("parameters")) {
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto count = e.at("count").get<std::size_t>();
    if (shape_size(shape) != count || offset % 8 != 0 || offset + count * 8 > bytes.size()) {
      throw FormatError("checkpoint entry '" + name + "' is inconsistent with the blob");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t raw;
      std::memcpy(&raw, bytes.data() + offset + i * 8, 8);
      values[i] = std::bit_cast<double>(to_le(raw));
    }
    loaded.emplace(name, Tensor(shape, std::move(values)));
    order.push_back(name);
  }

  // Shapes come from a fresh model built from the config.
  Rng rng(0);
  ck.model = model::init_model(ck.model.config, rng);
  ck.model.params.for_each([&](const std::string& name, Tensor& t) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw FormatError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                        ", expected " + shape_string(t.shape()));
    }
    t = std::move(it->second);
    loaded.erase(it);
  });
  for (const auto& name : order) {
    auto it = loaded.find(name);
    if (it != loaded.end()) ck.extras.push_back({name, std::move(it->second)});
  }
  return ck;
}

}  // namespace layersim
