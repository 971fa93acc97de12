#include "msf/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numbers>
#include <random>

#include "msf/error.hpp"
#include "msf/io.hpp"
#include "msf/params.hpp"

namespace msf {

namespace fs = std::filesystem;

Tensor SequenceDataset::sequence(int64_t index) const {
  if (index < 0 || index >= count) throw ContractError("sequence index " + std::to_string(index) + " out of range");
  const auto n = sequence_size();
  std::vector<double> v(values.begin() + index * n, values.begin() + (index + 1) * n);
  return Tensor({length, channels, height, width}, std::move(v));
}

Tensor SequenceDataset::batch(std::span<const int64_t> indices) const {
  const auto n = sequence_size();
  Tensor out({static_cast<int64_t>(indices.size()), length, channels, height, width});
  for (size_t b = 0; b < indices.size(); ++b) {
    const int64_t i = indices[b];
    if (i < 0 || i >= count) throw ContractError("sequence index " + std::to_string(i) + " out of range");
    std::copy(values.begin() + i * n, values.begin() + (i + 1) * n, out.ptr() + static_cast<int64_t>(b) * n);
  }
  return out;
}

Tensor SequenceDataset::all() const {
  std::vector<int64_t> idx(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = i;
  return batch(idx);
}

SequenceDataset SequenceDataset::slice(int64_t first, int64_t n) const {
  if (first < 0 || n < 0 || first + n > count) throw ContractError("dataset slice out of range");
  SequenceDataset out = *this;
  out.count = n;
  const auto sz = sequence_size();
  out.values.assign(values.begin() + first * sz, values.begin() + (first + n) * sz);
  return out;
}

SequenceDataset SequenceDataset::from_tensor(const Tensor& sequences, std::string split) {
  require_rank(sequences, 5, "SequenceDataset::from_tensor");
  SequenceDataset d;
  d.count = sequences.dim(0);
  d.length = sequences.dim(1);
  d.channels = sequences.dim(2);
  d.height = sequences.dim(3);
  d.width = sequences.dim(4);
  d.split = std::move(split);
  d.values.reserve(static_cast<size_t>(sequences.size()));
  for (double v : sequences.data()) d.values.push_back(static_cast<float>(v));
  return d;
}

std::string encode_raw_sequences(const SequenceDataset& data) {
  if (static_cast<int64_t>(data.values.size()) != data.count * data.sequence_size()) {
    throw ContractError("dataset value count does not match its dims");
  }
  std::string out;
  out.reserve(kRawHeaderBytes + data.values.size() * 4);
  out.append(kRawMagic, 4);
  put_u32(out, kRawVersion);
  for (int64_t d : data.shape()) put_i64(out, d);
  for (float v : data.values) put_f32(out, v);
  return out;
}

void save_raw_sequences(const fs::path& path, const SequenceDataset& data) {
  write_file_atomic(path, encode_raw_sequences(data));
}

SequenceDataset decode_raw_sequences(std::string_view bytes, const RawLayout& layout) {
  if (bytes.size() < kRawHeaderBytes) throw DataError("raw sequence file shorter than its header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kRawMagic, 4) != 0) throw DataError("bad magic bytes in raw sequence file");
  const uint32_t version = get_u32(p + 4);
  if (version != kRawVersion) throw DataError("unsupported raw sequence version " + std::to_string(version));

  SequenceDataset d;
  std::array<int64_t, 5> dims{};
  for (size_t i = 0; i < 5; ++i) {
    dims[i] = get_i64(p + 8 + 8 * i);
    if (dims[i] < 0 || (i > 0 && dims[i] == 0)) {
      throw DataError("invalid dimension " + std::to_string(dims[i]) + " in raw sequence header");
    }
  }
  d.count = dims[0];
  d.length = dims[1];
  d.channels = dims[2];
  d.height = dims[3];
  d.width = dims[4];

  // Guard the multiplication against absurd headers before trusting it.
  const uint64_t payload = bytes.size() - kRawHeaderBytes;
  uint64_t expected = 4;
  for (int64_t v : dims) {
    if (v != 0 && expected > payload / static_cast<uint64_t>(v)) {
      throw DataError("raw sequence header dims exceed payload size");
    }
    expected *= static_cast<uint64_t>(v);
  }
  if (expected != payload) {
    throw DataError("raw sequence payload has " + std::to_string(payload) + " bytes, header implies " +
                    std::to_string(expected));
  }

  auto check = [](const std::optional<int64_t>& want, int64_t got, const char* what) {
    if (want && *want != got) {
      throw DataError(std::string("raw sequence ") + what + " is " + std::to_string(got) + ", expected " +
                      std::to_string(*want));
    }
  };
  check(layout.length, d.length, "length");
  check(layout.channels, d.channels, "channel count");
  check(layout.height, d.height, "height");
  check(layout.width, d.width, "width");

  const size_t n = static_cast<size_t>(payload / 4);
  d.values.resize(n);
  size_t clamped = 0;
  for (size_t i = 0; i < n; ++i) {
    float v = get_f32(p + kRawHeaderBytes + 4 * i);
    if (std::isnan(v)) throw DataError("NaN value at element " + std::to_string(i) + " of raw sequence file");
    if (v < 0.0f || v > 1.0f) {
      v = std::clamp(v, 0.0f, 1.0f);
      ++clamped;
    }
    d.values[i] = v;
  }
  if (clamped > 0) {
    std::cerr << "warning: clamped " << clamped << " raw sequence values into [0, 1]\n";
  }
  return d;
}

SequenceDataset load_raw_sequences(const fs::path& path, const RawLayout& layout) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw DataError(e.what());
  }
  return decode_raw_sequences(bytes, layout);
}

IoSplit split_io(const Tensor& sequences, int64_t input_length, int64_t horizon) {
  if (input_length < 1 || horizon < 1) throw DataError("split_io needs input_length >= 1 and horizon >= 1");
  const bool batched = sequences.rank() == 5;
  if (!batched && sequences.rank() != 4) {
    throw ContractError("split_io expects [time,C,H,W] or [B,time,C,H,W], got " + to_string(sequences.shape()));
  }
  const int64_t batch = batched ? sequences.dim(0) : 1;
  const int64_t time = sequences.dim(batched ? 1 : 0);
  if (time < input_length + horizon) {
    throw DataError("sequence of length " + std::to_string(time) + " cannot provide " +
                    std::to_string(input_length) + " input + " + std::to_string(horizon) + " target frames");
  }
  const Shape& s = sequences.shape();
  const int64_t frame = batched ? s[2] * s[3] * s[4] : s[1] * s[2] * s[3];
  auto take = [&](int64_t first, int64_t n) {
    Shape shape = s;
    shape[batched ? 1 : 0] = n;
    Tensor out(shape);
    for (int64_t b = 0; b < batch; ++b) {
      const double* src = sequences.ptr() + (b * time + first) * frame;
      std::copy(src, src + n * frame, out.ptr() + b * n * frame);
    }
    return out;
  };
  return {take(0, input_length), take(input_length, horizon)};
}

SequenceDataset downscale(const SequenceDataset& data, int64_t factor) {
  if (factor < 1 || data.height % factor != 0 || data.width % factor != 0) {
    throw ConfigError("downscale factor " + std::to_string(factor) + " does not divide frame size");
  }
  if (factor == 1) return data;
  SequenceDataset out = data;
  out.height = data.height / factor;
  out.width = data.width / factor;
  out.values.assign(static_cast<size_t>(out.count * out.sequence_size()), 0.0f);
  const int64_t planes = data.count * data.length * data.channels;
  const double norm = 1.0 / static_cast<double>(factor * factor);
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t y = 0; y < out.height; ++y) {
      for (int64_t x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (int64_t dy = 0; dy < factor; ++dy) {
          for (int64_t dx = 0; dx < factor; ++dx) {
            acc += data.values[static_cast<size_t>((p * data.height + y * factor + dy) * data.width + x * factor + dx)];
          }
        }
        out.values[static_cast<size_t>((p * out.height + y) * out.width + x)] = static_cast<float>(acc * norm);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;

std::vector<Point> ellipse(double cx, double cy, double rx, double ry, int n = 16) {
  std::vector<Point> pts;
  for (int i = 0; i <= n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    pts.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return pts;
}

// Glyph outlines in a unit box, x to the right and y downwards.
std::vector<Stroke> glyph_strokes(int digit) {
  switch (digit) {
    case 0: return {ellipse(0.5, 0.5, 0.36, 0.48)};
    case 1: return {{{0.3, 0.2}, {0.55, 0.0}, {0.55, 1.0}}};
    case 2: return {{{0.12, 0.25}, {0.3, 0.03}, {0.7, 0.03}, {0.88, 0.25}, {0.82, 0.47}, {0.1, 1.0}, {0.92, 1.0}}};
    case 3:
      return {{{0.1, 0.05}, {0.85, 0.05}, {0.45, 0.45}, {0.85, 0.62}, {0.82, 0.9}, {0.5, 1.0}, {0.1, 0.9}}};
    case 4: return {{{0.7, 1.0}, {0.7, 0.0}, {0.05, 0.68}, {0.95, 0.68}}};
    case 5:
      return {{{0.85, 0.02}, {0.22, 0.02}, {0.16, 0.45}, {0.6, 0.4}, {0.88, 0.64}, {0.76, 0.94}, {0.4, 1.0},
               {0.1, 0.88}}};
    case 6:
      return {{{0.8, 0.04}, {0.42, 0.1}, {0.16, 0.48}, {0.15, 0.8}, {0.4, 1.0}, {0.75, 0.95}, {0.86, 0.7},
               {0.6, 0.5}, {0.3, 0.54}, {0.15, 0.72}}};
    case 7: return {{{0.1, 0.02}, {0.9, 0.02}, {0.4, 1.0}}};
    case 8: return {ellipse(0.5, 0.26, 0.3, 0.25), ellipse(0.5, 0.73, 0.36, 0.27)};
    case 9: {
      std::vector<Stroke> s{ellipse(0.5, 0.3, 0.33, 0.28)};
      s.push_back({{0.83, 0.3}, {0.62, 1.0}});
      return s;
    }
    default: return {};
  }
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

DigitSet synthetic_digits() {
  constexpr int64_t size = 28;
  constexpr double box_origin = 4.0, box_size = 20.0;
  const std::array<double, 3> radii{1.1, 1.5, 1.9};
  const std::array<double, 2> slants{0.0, 0.18};
  DigitSet set;
  set.size = size;
  for (int digit = 0; digit < 10; ++digit) {
    for (double radius : radii) {
      for (double slant : slants) {
        std::vector<Stroke> strokes = glyph_strokes(digit);
        for (auto& s : strokes) {
          for (auto& p : s) {
            // Shear around the vertical centre, then map into the 20x20 box.
            const double x = p.x + slant * (0.5 - p.y);
            p = {box_origin + x * box_size, box_origin + p.y * box_size};
          }
        }
        for (int64_t y = 0; y < size; ++y) {
          for (int64_t x = 0; x < size; ++x) {
            const Point c{x + 0.5, y + 0.5};
            double d = 1e9;
            for (const auto& s : strokes) {
              for (size_t k = 0; k + 1 < s.size(); ++k) d = std::min(d, segment_distance(c, s[k], s[k + 1]));
            }
            set.pixels.push_back(static_cast<float>(std::clamp(radius + 0.5 - d, 0.0, 1.0)));
          }
        }
        ++set.count;
      }
    }
  }
  return set;
}

DigitSet load_idx_digits(const fs::path& path, int64_t max_count) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw DataError(e.what());
  }
  if (bytes.size() < 16) throw DataError("IDX file too short: " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto be32 = [](const unsigned char* q) {
    return (static_cast<uint32_t>(q[0]) << 24) | (static_cast<uint32_t>(q[1]) << 16) |
           (static_cast<uint32_t>(q[2]) << 8) | static_cast<uint32_t>(q[3]);
  };
  if (be32(p) != 0x00000803) throw DataError("not an IDX3 unsigned-byte image file: " + path.string());
  const int64_t n = be32(p + 4), rows = be32(p + 8), cols = be32(p + 12);
  if (rows != cols || rows < 1) throw DataError("IDX images must be square");
  if (static_cast<int64_t>(bytes.size()) != 16 + n * rows * cols) throw DataError("IDX payload size mismatch");
  DigitSet set;
  set.size = rows;
  set.count = max_count > 0 ? std::min(n, max_count) : n;
  set.pixels.resize(static_cast<size_t>(set.count * rows * cols));
  for (size_t i = 0; i < set.pixels.size(); ++i) set.pixels[i] = static_cast<float>(p[16 + i] / 255.0);
  return set;
}

void MovingSpec::validate() const {
  if (num_digits != 2 && num_digits != 3) {
    throw ConfigError("number of digits must be 2 or 3, got " + std::to_string(num_digits));
  }
  if (length < 1) throw ConfigError("sequence length must be >= 1");
  if (count < 1) throw ConfigError("sequence count must be >= 1");
  if (first_index < 0) throw ConfigError("first_index must be >= 0");
  if (!(speed_min >= 0.0) || !(speed_max >= speed_min)) throw ConfigError("invalid speed range");
}

AxisMotion bounce_step(double position, double velocity, double limit) {
  double next = position + velocity;
  if (next >= limit && velocity > 0.0) return {limit, -velocity};
  if (next <= 0.0 && velocity < 0.0) return {0.0, -velocity};
  return {next, velocity};
}

int64_t raster_offset(double position) { return static_cast<int64_t>(std::lround(position)); }

void render_frame(const DigitSet& digits, std::span<const DigitTrack> tracks, int64_t frame, int64_t frame_size,
                  std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  for (const auto& tr : tracks) {
    const int64_t ox = raster_offset(tr.x[static_cast<size_t>(frame)]);
    const int64_t oy = raster_offset(tr.y[static_cast<size_t>(frame)]);
    for (int64_t y = 0; y < digits.size; ++y) {
      for (int64_t x = 0; x < digits.size; ++x) {
        const int64_t fy = oy + y, fx = ox + x;
        if (fy < 0 || fy >= frame_size || fx < 0 || fx >= frame_size) continue;
        float& dst = out[static_cast<size_t>(fy * frame_size + fx)];
        dst = std::max(dst, digits.at(tr.digit, y, x));
      }
    }
  }
}

MovingMnist generate_moving_mnist(const MovingSpec& spec, const DigitSet& digits) {
  spec.validate();
  if (digits.count < 1) throw DataError("digit source is empty");
  if (digits.size > spec.frame_size) throw ConfigError("digits are larger than the frame");
  const double limit = static_cast<double>(spec.frame_size - digits.size);
  const int64_t frame_px = spec.frame_size * spec.frame_size;

  MovingMnist out;
  out.data.count = spec.count;
  out.data.length = spec.length;
  out.data.channels = 1;
  out.data.height = spec.frame_size;
  out.data.width = spec.frame_size;
  out.data.values.assign(static_cast<size_t>(spec.count * spec.length * frame_px), 0.0f);
  out.tracks.resize(static_cast<size_t>(spec.count));

  for (int64_t s = 0; s < spec.count; ++s) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<uint64_t>(spec.first_index + s)));
    std::uniform_int_distribution<int64_t> pick(0, digits.count - 1);
    std::uniform_real_distribution<double> place(0.0, limit);
    std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> speed(spec.speed_min, spec.speed_max);

    auto& tracks = out.tracks[static_cast<size_t>(s)];
    for (int d = 0; d < spec.num_digits; ++d) {
      DigitTrack tr;
      tr.digit = pick(rng);
      double x = place(rng), y = place(rng);
      const double theta = heading(rng), v = speed(rng);
      double vx = v * std::cos(theta), vy = v * std::sin(theta);
      for (int64_t t = 0; t < spec.length; ++t) {
        tr.x.push_back(x);
        tr.y.push_back(y);
        tr.vx.push_back(vx);
        tr.vy.push_back(vy);
        const AxisMotion mx = bounce_step(x, vx, limit);
        const AxisMotion my = bounce_step(y, vy, limit);
        x = mx.position;
        vx = mx.velocity;
        y = my.position;
        vy = my.velocity;
      }
      tracks.push_back(std::move(tr));
    }
    for (int64_t t = 0; t < spec.length; ++t) {
      auto frame = std::span<float>(out.data.values).subspan(static_cast<size_t>((s * spec.length + t) * frame_px),
                                                             static_cast<size_t>(frame_px));
      render_frame(digits, tracks, t, spec.frame_size, frame);
    }
  }
  return out;
}

}  // namespace msf
