#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msf/tensor.hpp"

namespace msf {

// A set of equally shaped sequences [time, C, H, W] with intensities in [0, 1],
// stored as float32.
struct SequenceDataset {
  int64_t count = 0;
  int64_t length = 0;
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> values;
  std::string split = "train";

  int64_t sequence_size() const { return length * channels * height * width; }
  Shape shape() const { return {count, length, channels, height, width}; }

  // [time, C, H, W]
  Tensor sequence(int64_t index) const;
  // [B, time, C, H, W] gathered in the given order.
  Tensor batch(std::span<const int64_t> indices) const;
  Tensor all() const;
  // Subset [first, first + n).
  SequenceDataset slice(int64_t first, int64_t n) const;

  static SequenceDataset from_tensor(const Tensor& sequences, std::string split = "train");
};

// Raw sequence file:
//   bytes 0..3   magic "MSFQ"
//   bytes 4..7   format version, uint32 LE (currently 1)
//   bytes 8..47  dims [n_seq, time, C, H, W], int64 LE each
//   then         n_seq*time*C*H*W float32 LE values, row-major
inline constexpr char kRawMagic[4] = {'M', 'S', 'F', 'Q'};
inline constexpr uint32_t kRawVersion = 1;
inline constexpr size_t kRawHeaderBytes = 48;

// Optional expectations checked against the file header.
struct RawLayout {
  std::optional<int64_t> length;
  std::optional<int64_t> channels;
  std::optional<int64_t> height;
  std::optional<int64_t> width;
};

std::string encode_raw_sequences(const SequenceDataset& data);
void save_raw_sequences(const std::filesystem::path& path, const SequenceDataset& data);

// Throws DataError on a malformed header, truncated or oversized payload, or
// NaN values. Values outside [0, 1] are clamped with a warning on stderr.
SequenceDataset decode_raw_sequences(std::string_view bytes, const RawLayout& layout = {});
SequenceDataset load_raw_sequences(const std::filesystem::path& path, const RawLayout& layout = {});

struct IoSplit {
  Tensor input;
  Tensor target;
};

// Splits the time axis (axis 0 of [time,C,H,W] or axis 1 of [B,time,C,H,W])
// into the first `input_length` frames and the following `horizon` frames.
IoSplit split_io(const Tensor& sequences, int64_t input_length, int64_t horizon);

// Block-average spatial downscaling by an integer factor.
SequenceDataset downscale(const SequenceDataset& data, int64_t factor);

// ---------------------------------------------------------------------------
// Moving MNIST

// Square grayscale glyphs, values in [0, 1].
struct DigitSet {
  int64_t count = 0;
  int64_t size = 28;
  std::vector<float> pixels;  // count * size * size

  float at(int64_t digit, int64_t y, int64_t x) const {
    return pixels[static_cast<size_t>((digit * size + y) * size + x)];
  }
};

// Procedurally drawn 28x28 digits 0-9 in several stroke widths and slants.
DigitSet synthetic_digits();
// Reads an IDX3 image file (e.g. MNIST train-images-idx3-ubyte).
DigitSet load_idx_digits(const std::filesystem::path& path, int64_t max_count = 0);

struct MovingSpec {
  int num_digits = 2;
  int64_t frame_size = 64;
  int64_t length = 20;
  double speed_min = 3.0;
  double speed_max = 5.0;
  uint64_t seed = 0;
  int64_t count = 1;
  // Index of the first sequence; sequence i always uses child seed (seed, i),
  // so shards generated separately concatenate to the serial result.
  int64_t first_index = 0;

  void validate() const;
};

struct DigitTrack {
  int64_t digit = 0;
  std::vector<double> x, y;    // top-left position per frame
  std::vector<double> vx, vy;  // velocity used to leave each frame
};

struct MovingMnist {
  SequenceDataset data;
  std::vector<std::vector<DigitTrack>> tracks;  // [sequence][digit]
};

struct AxisMotion {
  double position;
  double velocity;
};

// Advances one axis by one frame inside [0, limit]. A step that would cross a
// wall stops at the wall and negates the velocity for the next frame.
AxisMotion bounce_step(double position, double velocity, double limit);

// Integer top-left pixel at which a glyph is drawn for a continuous position.
int64_t raster_offset(double position);

// Draws one frame of the given tracks by elementwise max compositing.
void render_frame(const DigitSet& digits, std::span<const DigitTrack> tracks, int64_t frame, int64_t frame_size,
                  std::span<float> out);

MovingMnist generate_moving_mnist(const MovingSpec& spec, const DigitSet& digits);

}  // namespace msf
