#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cris/metrics.hpp"

namespace cris {

struct NamedCurve {
  std::string label;
  std::vector<PRPoint> points;
};

struct PRPanel {
  std::string title;
  std::vector<NamedCurve> curves;
};

/// Renders side-by-side PR panels (recall on x, precision on y, both in
/// [0, 1]) with a shared legend per panel. Single-point curves are drawn as
/// markers. Output is a PNG; rendering is deterministic.
void render_pr_panels_png(const std::vector<PRPanel>& panels,
                          const std::filesystem::path& out_file);

/// Image grid: cells are 3xHxW images (rendered in color) or 1xHxW maps
/// (rendered grayscale with the fixed mapping 0 -> black, 1 -> white).
struct ProbMapGrid {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<torch::Tensor>> cells;  // [row][col]
};

void render_prob_map_grid_png(const ProbMapGrid& grid,
                              const std::filesystem::path& out_file);

}  // namespace cris
