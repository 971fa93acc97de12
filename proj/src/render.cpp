#include "msf/render.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "msf/error.hpp"
#include "msf/io.hpp"

namespace msf {

namespace fs = std::filesystem;

void Image::set(int64_t x, int64_t y, uint8_t r, uint8_t g, uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  auto* p = rgb.data() + (y * width + x) * 3;
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void png_noop_flush(png_structp) {}

uint8_t to_byte(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string encode_png(const Image& image) {
  if (image.width < 1 || image.height < 1) throw ContractError("cannot encode an empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_bytep> rows(static_cast<size_t>(image.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_append, png_noop_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (int64_t y = 0; y < image.height; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(image.rgb.data() + y * image.width * 3);
  }
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const fs::path& path, const Image& image) { write_file_atomic(path, encode_png(image)); }

Image sequence_grid(const Tensor& inputs, const Tensor& targets, const Tensor& predictions) {
  require_rank(inputs, 5, "sequence_grid inputs");
  require_same_shape(targets, predictions, "sequence_grid");
  const int64_t n = inputs.dim(0), t_in = inputs.dim(1), c = inputs.dim(2), h = inputs.dim(3), w = inputs.dim(4);
  const int64_t horizon = targets.dim(1);
  if (targets.dim(0) != n || targets.dim(2) != c || targets.dim(3) != h || targets.dim(4) != w) {
    throw ContractError("sequence_grid: inputs and targets disagree on shape");
  }
  const int64_t tiles = t_in + 2 * horizon;
  Image img(tiles * w + (tiles - 1) * kGridGap, n * h + (n - 1) * kGridGap, 255);
  auto draw = [&](const Tensor& src, int64_t seq, int64_t frame, int64_t steps, int64_t tile) {
    const int64_t x0 = tile * (w + kGridGap), y0 = seq * (h + kGridGap);
    const double* base = src.ptr() + (seq * steps + frame) * c * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        if (c == 3) {
          img.set(x0 + x, y0 + y, to_byte(base[y * w + x]), to_byte(base[h * w + y * w + x]),
                  to_byte(base[2 * h * w + y * w + x]));
        } else {
          double acc = 0.0;
          for (int64_t k = 0; k < c; ++k) acc += base[k * h * w + y * w + x];
          const uint8_t v = to_byte(acc / static_cast<double>(c));
          img.set(x0 + x, y0 + y, v, v, v);
        }
      }
    }
  };
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t t = 0; t < t_in; ++t) draw(inputs, s, t, t_in, t);
    for (int64_t t = 0; t < horizon; ++t) draw(targets, s, t, horizon, t_in + t);
    for (int64_t t = 0; t < horizon; ++t) draw(predictions, s, t, horizon, t_in + horizon + t);
  }
  return img;
}

std::string line_plot_svg(const std::string& title, const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
  constexpr double width = 640, height = 420, left = 70, right = 170, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  size_t frames = 1;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& s : series) {
    frames = std::max(frames, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  auto px = [&](size_t i) { return left + (frames > 1 ? pw * static_cast<double>(i) / static_cast<double>(frames - 1) : pw / 2); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
     << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (size_t i = 0; i < frames; ++i) {
    os << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << i + 1 << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << py(v) << "\" x2=\"" << left << "\" y2=\"" << py(v)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << v
       << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\" font-size=\"12\">frame</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPalette.size()];
    os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < series[s].values.size(); ++i) {
      if (i) os << ' ';
      os << px(i) << ',' << py(series[s].values[i]);
    }
    os << "\"/>\n";
    const double ly = top + 14 + 20 * static_cast<double>(s);
    os << "<g class=\"legend-entry\"><line x1=\"" << width - right + 12 << "\" y1=\"" << ly << "\" x2=\""
       << width - right + 36 << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>"
       << "<text x=\"" << width - right + 42 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
       << xml_escape(series[s].label) << "</text></g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<fs::path> render_report_plots(const std::vector<NamedReport>& reports, const fs::path& out_dir,
                                          std::ostream& notices) {
  if (reports.empty()) throw ContractError("no reports to plot");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto emit = [&](const std::string& file, const std::string& title, const std::string& y_label,
                  const std::vector<PlotSeries>& series) {
    const fs::path p = out_dir / file;
    write_file_atomic(p, line_plot_svg(title, y_label, series));
    written.push_back(p);
  };
  std::vector<PlotSeries> mse, mae, ssim;
  for (const auto& r : reports) {
    mse.push_back({r.label, r.report.mse});
    mae.push_back({r.label, r.report.mae});
    ssim.push_back({r.label, r.report.ssim});
  }
  emit("mse.svg", "Per-frame MSE", "MSE", mse);
  emit("mae.svg", "Per-frame MAE", "MAE", mae);
  emit("ssim.svg", "Per-frame SSIM", "SSIM", ssim);

  std::map<double, std::vector<PlotSeries>> csi;
  for (const auto& r : reports) {
    for (size_t k = 0; k < r.report.thresholds.size(); ++k) {
      csi[r.report.thresholds[k]].push_back({r.label, r.report.csi[k]});
    }
  }
  if (csi.empty()) {
    notices << "notice: no CSI thresholds in any report; CSI plot skipped\n";
    return written;
  }
  for (const auto& [threshold, series] : csi) {
    std::ostringstream name, title;
    name << "csi_" << threshold << ".svg";
    title << "Per-frame CSI (threshold " << threshold << ")";
    emit(name.str(), title.str(), "CSI", series);
  }
  return written;
}

}  // namespace msf
