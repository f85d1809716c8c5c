#include "layersim/feature_dump.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "layersim/error.hpp"
#include "layersim/numerics.hpp"

namespace layersim {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

constexpr char kMagic[4] = {'R', 'S', 'D', 'F'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64s(std::ostream& out, std::span<const double> values) {
  std::vector<std::uint64_t> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = to_le(std::bit_cast<std::uint64_t>(values[i]));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
}

std::uint32_t get_u32(std::istream& in, const char* field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(std::string("RSDF: truncated at ") + field);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void get_f64s(std::istream& in, std::span<double> values, const char* field) {
  std::vector<std::uint64_t> buf(values.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8))) {
    throw FormatError(std::string("RSDF: truncated in ") + field);
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<double>(to_le(buf[i]));
}

std::uint32_t narrow(std::size_t v, const char* field) {
  if (v > 0xffffffffu) throw FormatError(std::string("RSDF: ") + field + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::span<const double> FeatureDump::feature(std::size_t layer, std::size_t sample) const {
  const std::size_t d = dim();
  return features.data().subspan((layer * samples() + sample) * d, d);
}

std::span<double> FeatureDump::feature(std::size_t layer, std::size_t sample) {
  const std::size_t d = dim();
  return features.data().subspan((layer * samples() + sample) * d, d);
}

Tensor FeatureDump::layer(std::size_t l) const {
  if (l >= layer_count()) throw IndexError("dump layer " + std::to_string(l) + " out of range");
  auto src = features.row(l);
  return Tensor({samples(), dim()}, std::vector<double>(src.begin(), src.end()));
}

std::vector<double> FeatureDump::logits(std::size_t layer, std::size_t sample) const {
  if (!has_classifier()) throw ConfigError("dump has no classifier");
  auto h = feature(layer, sample);
  std::vector<double> z(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    z[k] = dot(classifier_w.row(k), h) + (classifier_b.empty() ? 0.0 : classifier_b[k]);
  }
  return z;
}

void FeatureDump::validate() const {
  if (features.rank() != 3) throw FormatError("dump features must be rank 3");
  if (labels.size() != samples()) throw FormatError("dump label count does not match N");
  for (auto y : labels)
    if (y >= classes) throw FormatError("dump label " + std::to_string(y) + " >= K");
  if (has_classifier()) {
    if (classifier_w.rank() != 2 || classifier_w.rows() != classes || classifier_w.cols() != dim()) {
      throw FormatError("dump classifier must be [K x d]");
    }
    if (!classifier_b.empty() && classifier_b.size() != classes) throw FormatError("dump bias must have K entries");
  }
}

FeatureDump dump_from_trace(const model::ForwardTrace& trace, const Tensor& classifier_w, const Tensor& classifier_b,
                            std::size_t classes) {
  const std::size_t layers = trace.features.size(), n = trace.samples, d = trace.features.at(0).cols();
  FeatureDump dump;
  dump.features = Tensor({layers, n, d});
  for (std::size_t l = 0; l < layers; ++l) {
    auto src = trace.features[l].data();
    std::copy(src.begin(), src.end(), dump.features.row(l).begin());
  }
  dump.labels = trace.labels;
  if (dump.labels.empty()) dump.labels.assign(n, 0);
  dump.classes = classes;
  dump.classifier_w = classifier_w;
  dump.classifier_b = classifier_b;
  dump.validate();
  return dump;
}

FeatureDump dump_features(const model::Model& model, const data::Dataset& dataset,
                          std::span<const std::size_t> indices, std::size_t batch_size) {
  if (indices.empty()) throw EmptyInputError("dump_features: no samples selected");
  const auto& cfg = model.config;
  if (dataset.seq_len() != cfg.seq_len || dataset.input_dim() != cfg.input_dim) {
    throw ConfigError("dataset tokens do not match the checkpoint's model input shape");
  }
  const std::size_t n = indices.size(), d = cfg.dim, layers = cfg.layers + 1;
  FeatureDump dump;
  dump.features = Tensor({layers, n, d});
  dump.labels = data::gather_labels(dataset, indices);
  dump.classes = cfg.classes;
  dump.classifier_w = model.params.classifier_w;
  dump.classifier_b = model.params.classifier_b;
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    const std::size_t hi = std::min(n, lo + batch_size);
    const auto idx = indices.subspan(lo, hi - lo);
    const auto trace = model::forward_with_trace(model, data::gather(dataset, idx));
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t i = lo; i < hi; ++i) {
        auto src = trace.features[l].row(i - lo);
        std::copy(src.begin(), src.end(), dump.feature(l, i).begin());
      }
  }
  dump.validate();
  return dump;
}

void write_dump(std::ostream& out, const FeatureDump& dump) {
  dump.validate();
  if (!dump.has_classifier()) throw FormatError("RSDF requires a classifier");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, narrow(dump.samples(), "N"));
  put_u32(out, narrow(dump.layer_count(), "L+1"));
  put_u32(out, narrow(dump.dim(), "d"));
  put_u32(out, narrow(dump.classes, "K"));
  put_u32(out, dump.classifier_b.empty() ? 0u : 1u);
  for (auto y : dump.labels) put_u32(out, narrow(y, "label"));
  put_f64s(out, dump.classifier_w.data());
  if (!dump.classifier_b.empty()) put_f64s(out, dump.classifier_b.data());
  put_f64s(out, dump.features.data());
  if (!out) throw IoError("RSDF: write failed");
}

void write_dump(const std::filesystem::path& path, const FeatureDump& dump) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_dump(out, dump);
}

FeatureDump read_dump(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("RSDF: truncated at magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("RSDF: bad magic (expected \"RSDF\")");
  const auto version = get_u32(in, "version");
  if (version != kVersion) throw FormatError("RSDF: unsupported version " + std::to_string(version));
  const std::size_t n = get_u32(in, "N");
  const std::size_t layers = get_u32(in, "L+1");
  const std::size_t d = get_u32(in, "d");
  const std::size_t k = get_u32(in, "K");
  const auto bias = get_u32(in, "bias-flag");
  if (n == 0 || layers == 0 || d == 0 || k == 0) throw FormatError("RSDF: zero-sized header field");
  if (bias > 1) throw FormatError("RSDF: bias-flag must be 0 or 1");
  FeatureDump dump;
  dump.classes = k;
  dump.labels.resize(n);
  for (auto& y : dump.labels) y = get_u32(in, "labels");
  dump.classifier_w = Tensor({k, d});
  get_f64s(in, dump.classifier_w.data(), "classifier weights");
  if (bias) {
    dump.classifier_b = Tensor({k});
    get_f64s(in, dump.classifier_b.data(), "classifier bias");
  }
  dump.features = Tensor({layers, n, d});
  get_f64s(in, dump.features.data(), "features");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("RSDF: trailing bytes after features");
  dump.validate();
  return dump;
}

FeatureDump read_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_dump(in);
}

}  // namespace layersim
