#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "msf/io.hpp"
#include "msf/render.hpp"
#include "test_util.hpp"

using namespace msf;
namespace fs = std::filesystem;

namespace {

size_t count_of(const std::string& haystack, const std::string& needle) {
  size_t n = 0;
  for (size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

MetricsReport report(double scale, std::vector<double> thresholds) {
  const Tensor p = testing::random_tensor({1, 4, 1, 12, 12}, 1, 0, scale);
  const Tensor t = testing::random_tensor({1, 4, 1, 12, 12}, 2, 0, 1);
  return evaluate_metrics(p, t, std::move(thresholds));
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("grid holds T + 2N tiles per sequence row") {
  const int64_t n = 3, t = 4, h = 8, w = 6, horizon = 5;
  const Tensor inputs({n, t, 1, h, w}, 0.2), targets({n, horizon, 1, h, w}, 0.5), preds({n, horizon, 1, h, w}, 0.9);
  const Image img = sequence_grid(inputs, targets, preds);
  const int64_t tiles = t + 2 * horizon;
  CHECK(img.width == tiles * w + (tiles - 1) * kGridGap);
  CHECK(img.height == n * h + (n - 1) * kGridGap);
  // First pixel of tile k in row 0 carries that tile's source intensity.
  auto pixel = [&](int64_t tile) { return img.rgb[static_cast<size_t>(tile * (w + kGridGap) * 3)]; };
  CHECK(pixel(0) == 51);
  CHECK(pixel(t) == 128);
  CHECK(pixel(t + horizon) == 230);
}

TEST_CASE("PNG encoding produces a valid signature") {
  Image img(3, 2, 10);
  img.set(1, 1, 255, 0, 0);
  const std::string png = encode_png(img);
  REQUIRE(png.size() > 8);
  CHECK(png.substr(1, 3) == "PNG");
  CHECK_THROWS(encode_png(Image{}));
}

TEST_CASE("one curve per series and one legend entry per report") {
  const std::string svg = line_plot_svg("t", "y", {{"a", {1, 2, 3}}, {"b", {3, 2, 1}}, {"c", {2, 2, 2}}});
  CHECK(count_of(svg, "class=\"series\"") == 3);
  CHECK(count_of(svg, "class=\"legend-entry\"") == 3);
  CHECK(svg.find(">b</text>") != std::string::npos);
}

TEST_CASE("report plots") {
  const fs::path dir = fs::temp_directory_path() / "msf_test_render";
  fs::remove_all(dir);
  SUBCASE("single report, one curve per metric") {
    std::ostringstream notes;
    const auto files = render_report_plots({{"model", report(1.0, {0.5})}}, dir, notes);
    CHECK(files.size() == 4);
    CHECK(count_of(read_file(dir / "mse.svg"), "class=\"series\"") == 1);
    CHECK(fs::exists(dir / "csi_0.5.svg"));
    CHECK(notes.str().empty());
  }
  SUBCASE("three reports share the axes") {
    std::ostringstream notes;
    render_report_plots({{"a", report(1.0, {})}, {"b", report(0.5, {})}, {"c", report(0.2, {})}}, dir, notes);
    CHECK(count_of(read_file(dir / "ssim.svg"), "class=\"legend-entry\"") == 3);
    CHECK(notes.str().find("CSI plot skipped") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "csi_0.5.svg"));
  }
}

}  // TEST_SUITE
