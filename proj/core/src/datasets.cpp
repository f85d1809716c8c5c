#include "layersim/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "layersim/error.hpp"
#include "layersim/rng.hpp"

namespace layersim::data {

namespace {

constexpr std::uint32_t kIdxU8Images = 0x00000803;
constexpr std::uint32_t kIdxU8Labels = 0x00000801;
constexpr std::uint32_t kIdxF64Tensor3 = 0x00000E03;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

class BigEndianReader {
 public:
  BigEndianReader(const std::vector<std::uint8_t>& bytes, std::string file) : bytes_(bytes), file_(std::move(file)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  double f64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes_[pos_++];
    return std::bit_cast<double>(v);
  }

  const std::uint8_t* take(std::size_t n, const char* field) {
    need(n, field);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(file_ + ": truncated while reading " + field + " (need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", file has " + std::to_string(bytes_.size()) +
                        ")");
    }
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  if (samples.rank() != 3) throw ConfigError("dataset samples must be rank 3 [N x s x input_dim]");
  if (samples.dim(0) != labels.size()) throw ConfigError("dataset sample and label counts differ");
  for (auto y : labels)
    if (y >= classes) throw ConfigError("dataset label " + std::to_string(y) + " >= class count");
  if (has_split()) {
    std::vector<char> seen(labels.size(), 0);
    for (const auto* part : {&train_indices, &eval_indices}) {
      for (auto i : *part) {
        if (i >= labels.size() || seen[i]) throw ConfigError("split indices must be disjoint and in range");
        seen[i] = 1;
      }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ConfigError("split does not cover dataset");
  }
}

void MixtureSpec::validate() const {
  if (classes < 2) throw ConfigError("mixture.classes must be >= 2");
  if (input_dim < 1 || tokens < 1 || per_class < 1) throw ConfigError("mixture sizes must be positive");
  if (!(between_std > 0.0)) throw ConfigError("mixture.between_std must be > 0");
  if (!(within_std >= 0.0)) throw ConfigError("mixture.within_std must be >= 0");
}

namespace {

Tensor draw_means(const MixtureSpec& spec, Rng& rng) {
  Tensor means({spec.classes, spec.tokens, spec.input_dim});
  for (auto& v : means.data()) v = spec.between_std * rng.normal();
  return means;
}

}  // namespace

Tensor mixture_means(const MixtureSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  return draw_means(spec, rng);
}

Dataset gen_mixture(const MixtureSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Tensor means = draw_means(spec, rng);

  const std::size_t n = spec.classes * spec.per_class;
  const std::size_t per_sample = spec.tokens * spec.input_dim;
  Dataset ds;
  ds.classes = spec.classes;
  ds.samples = Tensor({n, spec.tokens, spec.input_dim});
  ds.labels.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = j % spec.classes;
    ds.labels[j] = k;
    auto dst = ds.samples.row(j);
    auto mean = means.row(k);
    for (std::size_t e = 0; e < per_sample; ++e) dst[e] = mean[e] + spec.within_std * rng.normal();
  }
  return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t patch) {
  const auto img_bytes = read_file(images);
  const auto lbl_bytes = read_file(labels);
  BigEndianReader img(img_bytes, images.string());
  BigEndianReader lbl(lbl_bytes, labels.string());

  const std::uint32_t lmagic = lbl.u32("label magic");
  if (lmagic != kIdxU8Labels) {
    throw FormatError(labels.string() + ": bad label magic " + hex(lmagic) + " (expected " + hex(kIdxU8Labels) + ")");
  }
  const std::size_t label_count = lbl.u32("label count");

  const std::uint32_t imagic = img.u32("image magic");
  if (imagic != kIdxU8Images && imagic != kIdxF64Tensor3) {
    throw FormatError(images.string() + ": bad image magic " + hex(imagic) + " (expected " + hex(kIdxU8Images) +
                      " or " + hex(kIdxF64Tensor3) + ")");
  }
  const std::size_t count = img.u32("image count");
  const std::size_t dim1 = img.u32("dimension 1");
  const std::size_t dim2 = img.u32("dimension 2");
  if (count != label_count) {
    throw FormatError("count mismatch: image count " + std::to_string(count) + " in '" + images.string() +
                      "' vs label count " + std::to_string(label_count) + " in '" + labels.string() + "'");
  }
  if (count == 0 || dim1 == 0 || dim2 == 0) throw FormatError(images.string() + ": zero-sized dimension");

  Dataset ds;
  ds.labels.resize(count);
  const std::uint8_t* raw_labels = lbl.take(count, "labels");
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = raw_labels[i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.classes = max_label + 1;

  if (imagic == kIdxF64Tensor3) {
    ds.samples = Tensor({count, dim1, dim2});
    for (auto& v : ds.samples.data()) v = img.f64("tensor values");
  } else {
    const std::size_t rows = dim1, cols = dim2;
    if (patch == 0 || rows % patch != 0 || cols % patch != 0) {
      throw FormatError(images.string() + ": image " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " is not divisible into " + std::to_string(patch) + "x" + std::to_string(patch) + " patches");
    }
    const std::size_t prow = rows / patch, pcol = cols / patch;
    const std::uint8_t* pixels = img.take(count * rows * cols, "pixels");
    ds.samples = Tensor({count, prow * pcol, patch * patch});
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint8_t* image = pixels + i * rows * cols;
      auto dst = ds.samples.row(i);
      for (std::size_t pr = 0; pr < prow; ++pr)
        for (std::size_t pc = 0; pc < pcol; ++pc)
          for (std::size_t r = 0; r < patch; ++r)
            for (std::size_t c = 0; c < patch; ++c) {
              const std::size_t token = pr * pcol + pc;
              dst[token * patch * patch + r * patch + c] =
                  static_cast<double>(image[(pr * patch + r) * cols + pc * patch + c]) / 255.0;
            }
    }
  }
  return ds;
}

void write_idx(const Dataset& dataset, const std::filesystem::path& images, const std::filesystem::path& labels) {
  dataset.validate();
  std::vector<std::uint8_t> img;
  put_u32(img, kIdxF64Tensor3);
  for (std::size_t a = 0; a < 3; ++a) put_u32(img, static_cast<std::uint32_t>(dataset.samples.dim(a)));
  for (double v : dataset.samples.data()) put_f64(img, v);
  std::vector<std::uint8_t> lbl;
  put_u32(lbl, kIdxU8Labels);
  put_u32(lbl, static_cast<std::uint32_t>(dataset.size()));
  for (auto y : dataset.labels) {
    if (y > 255) throw ConfigError("IDX labels are unsigned bytes; label " + std::to_string(y) + " does not fit");
    lbl.push_back(static_cast<std::uint8_t>(y));
  }
  write_file(images, img);
  write_file(labels, lbl);
}

void write_idx_u8(std::span<const std::uint8_t> pixels, std::size_t count, std::size_t rows, std::size_t cols,
                  std::span<const std::uint8_t> labels, const std::filesystem::path& images,
                  const std::filesystem::path& labels_path) {
  if (pixels.size() != count * rows * cols || labels.size() != count) {
    throw DimensionError("write_idx_u8: buffer sizes do not match count x rows x cols");
  }
  std::vector<std::uint8_t> img;
  put_u32(img, kIdxU8Images);
  put_u32(img, static_cast<std::uint32_t>(count));
  put_u32(img, static_cast<std::uint32_t>(rows));
  put_u32(img, static_cast<std::uint32_t>(cols));
  img.insert(img.end(), pixels.begin(), pixels.end());
  std::vector<std::uint8_t> lbl;
  put_u32(lbl, kIdxU8Labels);
  put_u32(lbl, static_cast<std::uint32_t>(count));
  lbl.insert(lbl.end(), labels.begin(), labels.end());
  write_file(images, img);
  write_file(labels_path, lbl);
}

Dataset split(Dataset dataset, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw ConfigError("eval_fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(dataset.classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.labels[i]).push_back(i);
  Rng rng(seed);
  dataset.train_indices.clear();
  dataset.eval_indices.clear();
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& members = by_class[k];
    if (members.empty()) continue;
    if (members.size() < 2) {
      throw ConfigError("class " + std::to_string(k) + " has " + std::to_string(members.size()) +
                        " sample(s); stratified split needs at least 2");
    }
    rng.shuffle(members);
    auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(members.size())));
    n_eval = std::clamp<std::size_t>(n_eval, 1, members.size() - 1);
    dataset.eval_indices.insert(dataset.eval_indices.end(), members.begin(), members.begin() + n_eval);
    dataset.train_indices.insert(dataset.train_indices.end(), members.begin() + n_eval, members.end());
  }
  std::sort(dataset.train_indices.begin(), dataset.train_indices.end());
  std::sort(dataset.eval_indices.begin(), dataset.eval_indices.end());
  return dataset;
}

Tensor gather(const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw EmptyInputError("gather: no indices");
  Tensor batch({indices.size(), dataset.seq_len(), dataset.input_dim()});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto src = dataset.samples.row(indices[b]);
    std::copy(src.begin(), src.end(), batch.row(b).begin());
  }
  return batch;
}

std::vector<std::size_t> gather_labels(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(dataset.labels.at(i));
  return out;
}

}  // namespace layersim::data
