#include "layersim/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <ostream>

#include "layersim/error.hpp"

namespace layersim {

std::vector<std::string> Metadata::comment_lines() const {
  return {"tool: layersim " + std::string(kVersion), "command: " + command, "config_hash: " + config_hash,
          "seed: " + std::to_string(seed)};
}

Json Metadata::to_json() const {
  return Json{{"tool", "layersim"},
              {"version", std::string(kVersion)},
              {"command", command},
              {"config_hash", config_hash},
              {"seed", seed}};
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_comment_lines(std::ostream& out, const std::vector<std::string>& lines) {
  for (const auto& line : lines) out << "# " << line << "\n";
}

void write_matrix_csv(std::ostream& out, const Tensor& m, const Metadata& meta) {
  if (m.rank() != 2 || m.rows() != m.cols()) throw DimensionError("matrix CSV needs a square matrix");
  write_comment_lines(out, meta.comment_lines());
  out << "layer";
  for (std::size_t c = 0; c < m.cols(); ++c) out << "," << c;
  out << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < m.cols(); ++c) out << "," << format_double(m(r, c));
    out << "\n";
  }
}

void write_table_csv(std::ostream& out, const std::vector<std::string>& columns,
                     const std::vector<std::vector<std::string>>& rows, const Metadata& meta) {
  write_comment_lines(out, meta.comment_lines());
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw DimensionError("CSV row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

namespace {

std::array<int, 3> parse_hex(std::string_view hex) {
  auto byte = [&](std::size_t at) {
    int v = 0;
    std::from_chars(hex.data() + at, hex.data() + at + 2, v, 16);
    return v;
  };
  return {byte(1), byte(3), byte(5)};
}

}  // namespace

std::string ramp_color(double t) {
  if (std::isnan(t)) return "#808080";
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * static_cast<double>(kRampStops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), kRampStops.size() - 2);
  const double f = pos - static_cast<double>(i);
  const auto a = parse_hex(kRampStops[i]);
  const auto b = parse_hex(kRampStops[i + 1]);
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround(a[k] + f * (b[k] - a[k])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

void write_heatmap_svg(std::ostream& out, const Tensor& m, double lo, double hi, std::string_view title,
                       const Metadata& meta) {
  if (m.rank() != 2 || m.rows() != m.cols()) throw DimensionError("heatmap needs a square matrix");
  if (!(hi > lo)) throw ConfigError("heatmap range must satisfy lo < hi");
  constexpr int cell = 24, margin = 40;
  const int n = static_cast<int>(m.rows());
  const int size = 2 * margin + n * cell;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 20
      << "\" viewBox=\"0 0 " << size << " " << size + 20 << "\">\n";
  out << "<!--";
  for (const auto& line : meta.comment_lines()) out << " " << line << ";";
  out << " -->\n";
  out << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double v = m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      out << "<rect x=\"" << margin + c * cell << "\" y=\"" << margin + r * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << ramp_color((v - lo) / (hi - lo)) << "\"><title>(" << r
          << "," << c << ") " << format_double(v) << "</title></rect>\n";
    }
  }
  for (int i = 0; i < n; ++i) {
    out << "<text x=\"" << margin - 6 << "\" y=\"" << margin + i * cell + cell / 2 + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << i << "</text>\n";
    out << "<text x=\"" << margin + i * cell + cell / 2 << "\" y=\"" << margin + n * cell + 14
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << i << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace layersim
