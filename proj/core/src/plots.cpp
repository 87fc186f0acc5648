#include "cris/plots.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

#include "cris/errors.hpp"

namespace cris {

namespace {

constexpr int kPlotSize = 360;   // drawable area, pixels
constexpr int kMarginLeft = 56;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 36;
constexpr int kMarginBottom = 48;

cv::Scalar curve_color(const std::string& label, std::size_t index) {
  if (label == "backbone_only") return {180, 120, 31};   // blue
  if (label == "backbone_fcn_joint") return {50, 160, 44};  // green
  if (label == "cris") return {28, 26, 214};             // red
  static const cv::Scalar palette[] = {
      {153, 61, 143}, {14, 127, 255}, {44, 189, 188}, {40, 39, 214}};
  return palette[index % std::size(palette)];
}

cv::Point to_px(double recall, double precision) {
  const int x = kMarginLeft + static_cast<int>(std::lround(recall * kPlotSize));
  const int y = kMarginTop +
                static_cast<int>(std::lround((1.0 - precision) * kPlotSize));
  return {x, y};
}

cv::Mat render_panel(const PRPanel& panel) {
  const int w = kMarginLeft + kPlotSize + kMarginRight;
  const int h = kMarginTop + kPlotSize + kMarginBottom;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));

  const cv::Scalar axis(60, 60, 60);
  const cv::Scalar grid_color(225, 225, 225);
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    const auto a = to_px(v, 0.0), b = to_px(v, 1.0);
    const auto c = to_px(0.0, v), d = to_px(1.0, v);
    cv::line(img, a, b, grid_color, 1, cv::LINE_8);
    cv::line(img, c, d, grid_color, 1, cv::LINE_8);
    char tick[8];
    std::snprintf(tick, sizeof(tick), "%.2f", v);
    cv::putText(img, tick, {a.x - 14, kMarginTop + kPlotSize + 18},
                cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1, cv::LINE_8);
    cv::putText(img, tick, {6, c.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis,
                1, cv::LINE_8);
  }
  cv::rectangle(img, to_px(0.0, 1.0), to_px(1.0, 0.0), axis, 1, cv::LINE_8);
  cv::putText(img, panel.title, {kMarginLeft, 22}, cv::FONT_HERSHEY_SIMPLEX,
              0.55, axis, 1, cv::LINE_8);
  cv::putText(img, "recall", {kMarginLeft + kPlotSize / 2 - 20, h - 10},
              cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_8);
  cv::putText(img, "precision", {4, kMarginTop - 8}, cv::FONT_HERSHEY_SIMPLEX,
              0.4, axis, 1, cv::LINE_8);

  int legend_y = kMarginTop + 14;
  for (std::size_t k = 0; k < panel.curves.size(); ++k) {
    const auto& curve = panel.curves[k];
    const auto color = curve_color(curve.label, k);
    if (curve.points.size() == 1) {
      cv::circle(img, to_px(curve.points[0].recall, curve.points[0].precision),
                 4, color, cv::FILLED, cv::LINE_8);
    } else {
      for (std::size_t i = 1; i < curve.points.size(); ++i) {
        cv::line(img,
                 to_px(curve.points[i - 1].recall, curve.points[i - 1].precision),
                 to_px(curve.points[i].recall, curve.points[i].precision),
                 color, 2, cv::LINE_8);
      }
    }
    const int lx = kMarginLeft + 10;
    cv::line(img, {lx, legend_y}, {lx + 22, legend_y}, color, 2, cv::LINE_8);
    cv::putText(img, curve.label, {lx + 28, legend_y + 4},
                cv::FONT_HERSHEY_SIMPLEX, 0.38, axis, 1, cv::LINE_8);
    legend_y += 16;
  }
  return img;
}

cv::Mat tensor_to_bgr(const torch::Tensor& t) {
  auto cpu = t.detach().to(torch::kFloat32).clamp(0.0, 1.0).contiguous();
  if (cpu.dim() != 3 || (cpu.size(0) != 1 && cpu.size(0) != 3)) {
    throw InvalidArgument("invalid-config",
                          "grid cells must be 1xHxW or 3xHxW tensors");
  }
  const int h = static_cast<int>(cpu.size(1));
  const int w = static_cast<int>(cpu.size(2));
  auto u8 = cpu.mul(255.0f).round().to(torch::kUInt8);
  if (cpu.size(0) == 1) {
    cv::Mat gray(h, w, CV_8UC1,
                 const_cast<void*>(u8.squeeze(0).contiguous().const_data_ptr()));
    cv::Mat bgr;
    cv::cvtColor(gray, bgr, cv::COLOR_GRAY2BGR);
    return bgr;
  }
  auto hwc = u8.permute({1, 2, 0}).contiguous();
  cv::Mat rgb(h, w, CV_8UC3, const_cast<void*>(hwc.const_data_ptr()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

void render_pr_panels_png(const std::vector<PRPanel>& panels,
                          const std::filesystem::path& out_file) {
  if (panels.empty()) {
    throw InvalidArgument("empty-input", "no panels to render");
  }
  std::vector<cv::Mat> rendered;
  rendered.reserve(panels.size());
  for (const auto& p : panels) rendered.push_back(render_panel(p));
  cv::Mat figure;
  cv::hconcat(rendered, figure);
  if (out_file.has_parent_path()) {
    std::filesystem::create_directories(out_file.parent_path());
  }
  if (!cv::imwrite(out_file.string(), figure)) {
    throw IoError("io-error", "failed to write " + out_file.string());
  }
}

void render_prob_map_grid_png(const ProbMapGrid& grid,
                              const std::filesystem::path& out_file) {
  if (grid.cells.empty() || grid.cells.front().empty()) {
    throw InvalidArgument("empty-input", "no cells to render");
  }
  const int label_w = 110;
  const int label_h = 22;
  const int pad = 4;

  std::vector<std::vector<cv::Mat>> tiles;
  int tile_h = 0, tile_w = 0;
  for (const auto& row : grid.cells) {
    if (row.size() != grid.cells.front().size()) {
      throw InvalidArgument("misaligned-input", "ragged probability-map grid");
    }
    auto& out_row = tiles.emplace_back();
    for (const auto& cell : row) {
      out_row.push_back(tensor_to_bgr(cell));
      tile_h = std::max(tile_h, out_row.back().rows);
      tile_w = std::max(tile_w, out_row.back().cols);
    }
  }

  const auto rows = static_cast<int>(tiles.size());
  const auto cols = static_cast<int>(tiles.front().size());
  const int width = label_w + cols * (tile_w + pad) + pad;
  const int height = label_h + rows * (tile_h + pad) + pad;
  cv::Mat figure(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar ink(40, 40, 40);

  for (int c = 0; c < cols && c < static_cast<int>(grid.col_labels.size()); ++c) {
    cv::putText(figure, grid.col_labels[static_cast<std::size_t>(c)],
                {label_w + pad + c * (tile_w + pad), 15},
                cv::FONT_HERSHEY_SIMPLEX, 0.38, ink, 1, cv::LINE_8);
  }
  for (int r = 0; r < rows; ++r) {
    if (r < static_cast<int>(grid.row_labels.size())) {
      cv::putText(figure, grid.row_labels[static_cast<std::size_t>(r)],
                  {4, label_h + pad + r * (tile_h + pad) + tile_h / 2},
                  cv::FONT_HERSHEY_SIMPLEX, 0.38, ink, 1, cv::LINE_8);
    }
    for (int c = 0; c < cols; ++c) {
      const auto& tile = tiles[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      tile.copyTo(figure(cv::Rect(label_w + pad + c * (tile_w + pad),
                                  label_h + pad + r * (tile_h + pad),
                                  tile.cols, tile.rows)));
    }
  }
  if (out_file.has_parent_path()) {
    std::filesystem::create_directories(out_file.parent_path());
  }
  if (!cv::imwrite(out_file.string(), figure)) {
    throw IoError("io-error", "failed to write " + out_file.string());
  }
}

}  // namespace cris
