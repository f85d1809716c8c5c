#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "layersim/config_json.hpp"
#include "layersim/tensor.hpp"

namespace layersim {

inline constexpr std::string_view kVersion = "0.1.0";

/// Provenance block attached to every artifact.
struct Metadata {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;

  /// "# tool: layersim 0.1.0", "# command: ...", "# config_hash: ...", "# seed: ...".
  std::vector<std::string> comment_lines() const;
  Json to_json() const;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);

void write_comment_lines(std::ostream& out, const std::vector<std::string>& lines);

/// Square matrix CSV: header row "layer,0,1,..." then one row per layer index.
void write_matrix_csv(std::ostream& out, const Tensor& m, const Metadata& meta);

/// Generic CSV with comment header; each row must have columns.size() cells.
void write_table_csv(std::ostream& out, const std::vector<std::string>& columns,
                     const std::vector<std::vector<std::string>>& rows, const Metadata& meta);

/// Eight-stop viridis ramp, linearly interpolated in RGB.
inline constexpr std::array<std::string_view, 8> kRampStops = {"#440154", "#46327e", "#365c8d", "#277f8e",
                                                              "#1fa187", "#4ac16d", "#a0da39", "#fde725"};

/// Color for t in [0, 1] (clamped); NaN maps to mid-grey.
std::string ramp_color(double t);

/// Square heatmap; values mapped from [lo, hi] onto the ramp, row 0 on top.
void write_heatmap_svg(std::ostream& out, const Tensor& m, double lo, double hi, std::string_view title,
                       const Metadata& meta);

}  // namespace layersim
