#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "msf/metrics.hpp"
#include "msf/tensor.hpp"

namespace msf {

// 8-bit RGB raster.
struct Image {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> rgb;  // width * height * 3

  Image() = default;
  Image(int64_t w, int64_t h, uint8_t fill = 0) : width(w), height(h), rgb(static_cast<size_t>(w * h * 3), fill) {}
  void set(int64_t x, int64_t y, uint8_t r, uint8_t g, uint8_t b);
};

std::string encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

inline constexpr int64_t kGridGap = 2;

// One row per sequence holding its input frames, then the target frames, then
// the predicted frames (T + 2N tiles), separated by `kGridGap` white pixels.
// inputs [n, T, C, H, W]; targets and predictions [n, N, C, H, W]. Multi-channel
// frames are shown as their channel mean (RGB when C == 3).
Image sequence_grid(const Tensor& inputs, const Tensor& targets, const Tensor& predictions);

struct PlotSeries {
  std::string label;
  std::vector<double> values;  // one per frame, x = 1..n
};

// Line chart over frame index with a legend entry per series.
std::string line_plot_svg(const std::string& title, const std::string& y_label,
                          const std::vector<PlotSeries>& series);

struct NamedReport {
  std::string label;
  MetricsReport report;
};

// Writes mse.svg, mae.svg, ssim.svg and one csi_<threshold>.svg per threshold
// found in any report. When no report has thresholds the CSI plot is skipped
// and a notice goes to `notices`. Returns the written paths.
std::vector<std::filesystem::path> render_report_plots(const std::vector<NamedReport>& reports,
                                                       const std::filesystem::path& out_dir, std::ostream& notices);

}  // namespace msf
