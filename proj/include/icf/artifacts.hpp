#pragma once
// Plain-text output formats: labeled CSV matrices, SVG heatmaps, PGM rasters.
#include <string>

#include "icf/metrics.hpp"
#include "icf/tensor.hpp"

namespace icf::artifacts {

/// Header row "label,<col labels>", then one row per matrix row; values use
/// shortest round-trip formatting.
std::string matrix_csv(const metrics::Matrix& m, const std::string& corner = "");

enum class ColorScale {
    diverging,  // blue (-limit) .. white (0) .. red (+limit)
    sequential  // white (min) .. red (max)
};

/// Standalone SVG heatmap with cell values printed in each cell.
std::string heatmap_svg(const metrics::Matrix& m, const std::string& title, ColorScale scale);

/// Binary PGM (P5); values clamped to [0, 1] and scaled to 0..255.
/// Accepts [H x W] or [1 x H x W] tensors.
std::string pgm(const Tensor& image);

/// Original and reconstruction side by side, separated by a one-pixel gray bar.
std::string pgm_pair(const Tensor& original, const Tensor& reconstruction, std::size_t scale = 8);

}  // namespace icf::artifacts
