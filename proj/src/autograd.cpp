#include "msf/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "msf/error.hpp"

namespace msf {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Wraps `value` in a new node. The backward closure is attached only when
// recording is enabled and some parent needs a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

Node& parent(Node& self, size_t i) { return *self.parents[i]; }

void require_same(const Var& a, const Var& b, const char* what) { require_same_shape(a.value(), b.value(), what); }

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const auto in = a.value().data();
  auto o = out.data();
  for (size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
  return make_result(std::move(out), {a}, [deriv](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    const auto go = self.grad.data();
    const auto x = p.value.data();
    const auto y = self.value.data();
    auto gi = g.data();
    for (size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * deriv(x[i], y[i]);
  });
}

void im2col(const double* img, int64_t channels, int64_t height, int64_t width, int64_t ksize, int stride, int pad,
            int64_t out_h, int64_t out_w, double* cols) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t ky = 0; ky < ksize; ++ky) {
      for (int64_t kx = 0; kx < ksize; ++kx) {
        double* row = cols + ((c * ksize + ky) * ksize + kx) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            row[oy * out_w + ox] = (iy >= 0 && iy < height && ix >= 0 && ix < width)
                                       ? img[(c * height + iy) * width + ix]
                                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, int64_t channels, int64_t height, int64_t width, int64_t ksize, int stride,
                int pad, int64_t out_h, int64_t out_w, double* img) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t ky = 0; ky < ksize; ++ky) {
      for (int64_t kx = 0; kx < ksize; ++kx) {
        const double* row = cols + ((c * ksize + ky) * ksize + kx) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) img[(c * height + iy) * width + ix] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw ContractError("use of undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw ContractError("use of undefined Var");
  return node_->value;
}

Tensor Var::grad() const {
  if (!node_) throw ContractError("use of undefined Var");
  if (node_->grad.empty()) return Tensor::zeros(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root) {
  if (!root.defined()) throw ContractError("backward on undefined Var");
  if (root.value().size() != 1) {
    throw ContractError("backward needs a single-element root, got shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without deep recursion.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are not needed once propagated.
  for (Node* n : order) {
    if (n->backward_fn) n->grad = Tensor();
  }
}

namespace ops {

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      auto g = p.grad_buffer().data();
      const auto go = self.grad.data();
      for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto g = p.grad_buffer().data();
      const auto go = self.grad.data();
      for (size_t i = 0; i < g.size(); ++i) g[i] += sign * go[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const auto go = self.grad.data();
    if (pa.requires_grad) {
      auto g = pa.grad_buffer().data();
      const auto y = pb.value.data();
      for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer().data();
      const auto x = pa.value.data();
      for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * x[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var one_minus(const Var& a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var maximum(const Var& a, const Var& b) {
  require_same(a, b, "maximum");
  Tensor out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] >= y[i] ? x[i] : y[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const auto go = self.grad.data();
    const auto x = pa.value.data(), y = pb.value.data();
    if (pa.requires_grad) {
      auto g = pa.grad_buffer().data();
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] >= y[i]) g[i] += go[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer().data();
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] < y[i]) g[i] += go[i];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x.value(), 4, "conv2d input");
  require_rank(weight.value(), 4, "conv2d weight");
  const int64_t batch = x.dim(0), in_c = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int64_t out_c = weight.dim(0), ksize = weight.dim(2);
  if (weight.dim(1) != in_c || weight.dim(3) != ksize) {
    throw ContractError("conv2d: weight " + to_string(weight.shape()) + " incompatible with input " +
                        to_string(x.shape()));
  }
  if (bias.defined() && bias.value().size() != out_c) {
    throw ContractError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(out_c) +
                        " output channels");
  }
  if (stride < 1 || pad < 0) throw ContractError("conv2d: invalid stride/padding");
  const int64_t out_h = (height + 2 * pad - ksize) / stride + 1;
  const int64_t out_w = (width + 2 * pad - ksize) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ContractError("conv2d: kernel larger than padded input");

  const int64_t patch = in_c * ksize * ksize;
  const int64_t pixels = out_h * out_w;
  Tensor out({batch, out_c, out_h, out_w});
  RowMat cols(patch, pixels);
  ConstMapMat wmat(weight.value().ptr(), out_c, patch);
  for (int64_t n = 0; n < batch; ++n) {
    im2col(x.value().ptr() + n * in_c * height * width, in_c, height, width, ksize, stride, pad, out_h, out_w,
           cols.data());
    MapMat o(out.ptr() + n * out_c * pixels, out_c, pixels);
    o.noalias() = wmat * cols;
    if (bias.defined()) {
      for (int64_t c = 0; c < out_c; ++c) o.row(c).array() += bias.value()[c];
    }
  }

  return make_result(std::move(out), {x, weight, bias},
                     [=](Node& self) {
                       Node& px = parent(self, 0);
                       Node& pw = parent(self, 1);
                       Node* pb = self.parents[2] ? self.parents[2].get() : nullptr;
                       RowMat cols(patch, pixels);
                       ConstMapMat wmat(pw.value.ptr(), out_c, patch);
                       for (int64_t n = 0; n < batch; ++n) {
                         ConstMapMat go(self.grad.ptr() + n * out_c * pixels, out_c, pixels);
                         if (pw.requires_grad) {
                           im2col(px.value.ptr() + n * in_c * height * width, in_c, height, width, ksize, stride,
                                  pad, out_h, out_w, cols.data());
                           MapMat gw(pw.grad_buffer().ptr(), out_c, patch);
                           gw.noalias() += go * cols.transpose();
                         }
                         if (pb && pb->requires_grad) {
                           auto& gb = pb->grad_buffer();
                           for (int64_t c = 0; c < out_c; ++c) gb[c] += go.row(c).sum();
                         }
                         if (px.requires_grad) {
                           RowMat dcols = wmat.transpose() * go;
                           col2im_add(dcols.data(), in_c, height, width, ksize, stride, pad, out_h, out_w,
                                      px.grad_buffer().ptr() + n * in_c * height * width);
                         }
                       }
                     });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x.value(), 4, "upsample");
  const int64_t planes = x.dim(0) * x.dim(1), height = x.dim(2), width = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * height, 2 * width});
  const double* in = x.value().ptr();
  double* o = out.ptr();
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t y = 0; y < 2 * height; ++y) {
      for (int64_t xx = 0; xx < 2 * width; ++xx) {
        o[(p * 2 * height + y) * 2 * width + xx] = in[(p * height + y / 2) * width + xx / 2];
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Node& px = parent(self, 0);
    double* g = px.grad_buffer().ptr();
    const double* go = self.grad.ptr();
    for (int64_t p = 0; p < planes; ++p) {
      for (int64_t y = 0; y < 2 * height; ++y) {
        for (int64_t xx = 0; xx < 2 * width; ++xx) {
          g[(p * height + y / 2) * width + xx / 2] += go[(p * 2 * height + y) * 2 * width + xx];
        }
      }
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  require_rank(parts[0].value(), 4, "concat_channels");
  const int64_t batch = first[0], height = first[2], width = first[3];
  int64_t total = 0;
  std::vector<int64_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != batch || s[2] != height || s[3] != width) {
      throw ContractError("concat_channels: incompatible shapes " + to_string(first) + " and " + to_string(s));
    }
    widths.push_back(s[1]);
    total += s[1];
  }
  const int64_t plane = height * width;
  Tensor out({batch, total, height, width});
  for (int64_t n = 0; n < batch; ++n) {
    int64_t offset = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].value().ptr() + n * widths[k] * plane;
      std::copy(src, src + widths[k] * plane, out.ptr() + (n * total + offset) * plane);
      offset += widths[k];
    }
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(parents), [=](Node& self) {
    for (int64_t n = 0; n < batch; ++n) {
      int64_t offset = 0;
      for (size_t k = 0; k < widths.size(); ++k) {
        Node& p = parent(self, k);
        if (p.requires_grad) {
          const double* go = self.grad.ptr() + (n * total + offset) * plane;
          double* g = p.grad_buffer().ptr() + n * widths[k] * plane;
          for (int64_t i = 0; i < widths[k] * plane; ++i) g[i] += go[i];
        }
        offset += widths[k];
      }
    }
  });
}

Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_channels(const Var& x, int64_t start, int64_t count) {
  require_rank(x.value(), 4, "slice_channels");
  const int64_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (start < 0 || count < 0 || start + count > channels) {
    throw ContractError("slice_channels: range out of bounds for " + to_string(x.shape()));
  }
  Tensor out({batch, count, x.dim(2), x.dim(3)});
  for (int64_t n = 0; n < batch; ++n) {
    const double* src = x.value().ptr() + (n * channels + start) * plane;
    std::copy(src, src + count * plane, out.ptr() + n * count * plane);
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Node& p = parent(self, 0);
    for (int64_t n = 0; n < batch; ++n) {
      const double* go = self.grad.ptr() + n * count * plane;
      double* g = p.grad_buffer().ptr() + (n * channels + start) * plane;
      for (int64_t i = 0; i < count * plane; ++i) g[i] += go[i];
    }
  });
}

Var softmax_channels(const Var& logits) {
  require_rank(logits.value(), 4, "softmax_channels");
  const int64_t batch = logits.dim(0), channels = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  Tensor out(logits.shape());
  const double* in = logits.value().ptr();
  double* o = out.ptr();
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t i = 0; i < plane; ++i) {
      const double* base = in + n * channels * plane + i;
      double peak = base[0];
      for (int64_t c = 1; c < channels; ++c) peak = std::max(peak, base[c * plane]);
      double total = 0.0;
      for (int64_t c = 0; c < channels; ++c) total += std::exp(base[c * plane] - peak);
      for (int64_t c = 0; c < channels; ++c) {
        o[n * channels * plane + c * plane + i] = std::exp(base[c * plane] - peak) / total;
      }
    }
  }
  return make_result(std::move(out), {logits}, [=](Node& self) {
    Node& p = parent(self, 0);
    double* g = p.grad_buffer().ptr();
    const double* go = self.grad.ptr();
    const double* y = self.value.ptr();
    for (int64_t n = 0; n < batch; ++n) {
      for (int64_t i = 0; i < plane; ++i) {
        const int64_t base = n * channels * plane + i;
        double dot = 0.0;
        for (int64_t c = 0; c < channels; ++c) dot += go[base + c * plane] * y[base + c * plane];
        for (int64_t c = 0; c < channels; ++c) {
          g[base + c * plane] += y[base + c * plane] * (go[base + c * plane] - dot);
        }
      }
    }
  });
}

Var mul_channel_broadcast(const Var& x, const Var& w) {
  require_rank(x.value(), 4, "mul_channel_broadcast");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 4 || ws[0] != xs[0] || ws[1] != 1 || ws[2] != xs[2] || ws[3] != xs[3]) {
    throw ContractError("mul_channel_broadcast: weight " + to_string(ws) + " incompatible with " + to_string(xs));
  }
  const int64_t batch = xs[0], channels = xs[1], plane = xs[2] * xs[3];
  Tensor out(xs);
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t c = 0; c < channels; ++c) {
      for (int64_t i = 0; i < plane; ++i) {
        const int64_t k = (n * channels + c) * plane + i;
        out[k] = x.value()[k] * w.value()[n * plane + i];
      }
    }
  }
  return make_result(std::move(out), {x, w}, [=](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    const double* go = self.grad.ptr();
    for (int64_t n = 0; n < batch; ++n) {
      for (int64_t c = 0; c < channels; ++c) {
        for (int64_t i = 0; i < plane; ++i) {
          const int64_t k = (n * channels + c) * plane + i;
          if (px.requires_grad) px.grad_buffer()[k] += go[k] * pw.value[n * plane + i];
          if (pw.requires_grad) pw.grad_buffer()[n * plane + i] += go[k] * px.value[k];
        }
      }
    }
  });
}

Var sum_all(const Var& a) {
  Tensor out({1}, a.value().sum());
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& p = parent(self, 0);
    const double go = self.grad[0];
    for (auto& g : p.grad_buffer().data()) g += go;
  });
}

Var sum_squared_error(const Var& pred, const Tensor& target) {
  require_same_shape(pred.value(), target, "sum_squared_error");
  double total = 0.0;
  const auto p = pred.value().data();
  const auto t = target.data();
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    total += d * d;
  }
  return make_result(Tensor({1}, total), {pred}, [target](Node& self) {
    Node& p = parent(self, 0);
    const double go = self.grad[0];
    auto g = p.grad_buffer().data();
    const auto v = p.value.data();
    const auto t = target.data();
    for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * go * (v[i] - t[i]);
  });
}

}  // namespace ops

}  // namespace msf
