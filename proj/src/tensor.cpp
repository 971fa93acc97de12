#include "msf/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "msf/error.hpp"

namespace msf {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t element_count(const Shape& shape) {
  int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ContractError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(element_count(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != element_count(shape_)) {
    throw ContractError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                        to_string(shape_));
  }
}

int64_t Tensor::dim(int64_t axis) const {
  if (axis < 0 || axis >= rank()) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

double& Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) {
  return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

double Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
  return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw ContractError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::time_slice(int64_t t) const {
  require_rank(*this, 5, "time_slice");
  const int64_t batch = shape_[0], steps = shape_[1];
  if (t < 0 || t >= steps) throw ContractError("time index " + std::to_string(t) + " out of range");
  const int64_t frame = shape_[2] * shape_[3] * shape_[4];
  Tensor out({batch, shape_[2], shape_[3], shape_[4]});
  for (int64_t b = 0; b < batch; ++b) {
    const double* src = data_.data() + (b * steps + t) * frame;
    std::copy(src, src + frame, out.ptr() + b * frame);
  }
  return out;
}

Tensor Tensor::stack_time(std::span<const Tensor> frames) {
  if (frames.empty()) throw ContractError("stack_time needs at least one frame");
  const Shape& fs = frames[0].shape();
  if (fs.size() != 4) throw ContractError("stack_time expects rank-4 frames, got " + to_string(fs));
  const int64_t batch = fs[0], steps = static_cast<int64_t>(frames.size());
  const int64_t frame = fs[1] * fs[2] * fs[3];
  Tensor out({batch, steps, fs[1], fs[2], fs[3]});
  for (int64_t t = 0; t < steps; ++t) {
    if (frames[static_cast<size_t>(t)].shape() != fs) throw ContractError("stack_time frames differ in shape");
    for (int64_t b = 0; b < batch; ++b) {
      const double* src = frames[static_cast<size_t>(t)].ptr() + b * frame;
      std::copy(src, src + frame, out.ptr() + (b * steps + t) * frame);
    }
  }
  return out;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::min() const {
  if (data_.empty()) throw ContractError("min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  if (data_.empty()) throw ContractError("max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
}

void require_rank(const Tensor& t, int64_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ContractError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                        to_string(t.shape()));
  }
}

}  // namespace msf
