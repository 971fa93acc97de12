#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "msf/tensor.hpp"

namespace msf {

// Reverse-mode automatic differentiation over Tensors.
//
// Every operation in `ops` produces a Var whose node records its parents and a
// backward closure. Graphs are built eagerly and released when the last Var
// referring to them goes away; parameters are long-lived leaf Vars.

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var parameter(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }
  int64_t dim(int64_t axis) const { return value().dim(axis); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  // Gradient accumulated by the last backward pass; zeros if none reached it.
  Tensor grad() const;
  void zero_grad();

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(root)/d(root) = 1 for a single-element root and propagates to every
// reachable node that requires grad. Gradients accumulate into leaves.
void backward(const Var& root);

namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var one_minus(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var leaky_relu(const Var& a, double slope);
// Elementwise max; on ties the gradient goes to `a`.
Var maximum(const Var& a, const Var& b);

// 2-D cross-correlation. x [B,Cin,H,W], weight [Cout,Cin,K,K], bias [Cout]
// (may be undefined). Zero padding of `pad` pixels on every side.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// Nearest-neighbour x2 spatial upsampling.
Var upsample_nearest2x(const Var& x);

Var concat_channels(std::span<const Var> parts);
Var concat_channels(std::initializer_list<Var> parts);
Var slice_channels(const Var& x, int64_t start, int64_t count);
// Softmax over axis 1 of a [B,C,H,W] map.
Var softmax_channels(const Var& logits);
// x [B,C,H,W] times w [B,1,H,W] broadcast over channels.
Var mul_channel_broadcast(const Var& x, const Var& w);

Var sum_all(const Var& a);
// sum((pred - target)^2) as a one-element Var; target is treated as constant.
Var sum_squared_error(const Var& pred, const Tensor& target);

}  // namespace ops

}  // namespace msf
