#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace msf {

using Shape = std::vector<int64_t>;

std::string to_string(const Shape& shape);
int64_t element_count(const Shape& shape);

// Dense row-major array of doubles. Feature maps use [B, C, H, W] and frame
// sequences use [B, T, C, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }

  const Shape& shape() const noexcept { return shape_; }
  int64_t rank() const noexcept { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t axis) const;
  int64_t size() const noexcept { return static_cast<int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }
  const std::vector<double>& vec() const noexcept { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-4 element access.
  double& at(int64_t n, int64_t c, int64_t h, int64_t w);
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const;

  void fill(double value);
  Tensor reshaped(Shape shape) const;

  // Slice [index] along axis 1 of a rank-5 tensor -> rank-4 tensor.
  Tensor time_slice(int64_t t) const;
  // Stack rank-4 tensors along a new axis 1 -> rank-5 tensor.
  static Tensor stack_time(std::span<const Tensor> frames);

  double sum() const;
  double min() const;
  double max() const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws ContractError naming `what` when the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
void require_rank(const Tensor& t, int64_t rank, const char* what);

}  // namespace msf
