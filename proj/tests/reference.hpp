#pragma once

// Scalar reference implementations used as test oracles. Everything here is
// written with plain loops over std::vector and reads parameter tensors
// directly; none of it goes through the autograd ops or the Eigen GEMM path.

#include <cmath>
#include <cstdint>
#include <vector>

#include "msf/cells.hpp"
#include "msf/fusion.hpp"
#include "msf/model.hpp"
#include "msf/tensor.hpp"

namespace ref {

// Single feature map [c, h, w].
struct Map {
  int64_t c = 0, h = 0, w = 0;
  std::vector<double> v;

  Map() = default;
  Map(int64_t c_, int64_t h_, int64_t w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_ * h_ * w_), fill) {}
  double& at(int64_t k, int64_t y, int64_t x) { return v[static_cast<size_t>((k * h + y) * w + x)]; }
  double at(int64_t k, int64_t y, int64_t x) const { return v[static_cast<size_t>((k * h + y) * w + x)]; }
};

inline Map from_tensor(const msf::Tensor& t, int64_t n = 0) {
  Map m(t.dim(1), t.dim(2), t.dim(3));
  for (int64_t k = 0; k < m.c; ++k)
    for (int64_t y = 0; y < m.h; ++y)
      for (int64_t x = 0; x < m.w; ++x) m.at(k, y, x) = t.at(n, k, y, x);
  return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double leaky(double x) { return x > 0.0 ? x : msf::kLeakySlope * x; }

// Zero-padded cross-correlation with padding k/2.
inline Map conv(const Map& in, const msf::Tensor& weight, const msf::Tensor& bias, int stride = 1) {
  const int64_t out_c = weight.dim(0), k = weight.dim(2), pad = k / 2;
  const int64_t oh = (in.h + 2 * pad - k) / stride + 1, ow = (in.w + 2 * pad - k) / stride + 1;
  Map out(out_c, oh, ow);
  for (int64_t o = 0; o < out_c; ++o) {
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (int64_t i = 0; i < in.c; ++i) {
          for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
              const int64_t iy = y * stride - pad + ky, ix = x * stride - pad + kx;
              if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
              acc += weight.at(o, i, ky, kx) * in.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

inline Map conv(const Map& in, const msf::ConvParams& p, int stride = 1) {
  return conv(in, p.weight.value(), p.bias.value(), stride);
}

inline Map cat(const Map& a, const Map& b) {
  Map out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<long>(a.v.size()));
  return out;
}

inline Map nearest2x(const Map& in) {
  Map out(in.c, 2 * in.h, 2 * in.w);
  for (int64_t k = 0; k < in.c; ++k)
    for (int64_t y = 0; y < out.h; ++y)
      for (int64_t x = 0; x < out.w; ++x) out.at(k, y, x) = in.at(k, y / 2, x / 2);
  return out;
}

// Gate pre-activation for channel block `block` of width `width`.
inline double gate(const Map& z, int64_t block, int64_t width, int64_t k, int64_t y, int64_t x) {
  return z.at(block * width + k, y, x);
}

struct State {
  Map h, c, m;
};

inline State state_from(const msf::CellState& s, int64_t n = 0) {
  State r;
  r.h = from_tensor(s.hidden.value(), n);
  if (s.memory.defined()) r.c = from_tensor(s.memory.value(), n);
  if (s.st_memory.defined()) r.m = from_tensor(s.st_memory.value(), n);
  return r;
}

inline State lstm(const Map& x, const State& s, const msf::CellParams& p) {
  const int64_t C = p.hidden_channels;
  const Map z = conv(cat(x, s.h), p.gates);
  State out{Map(C, x.h, x.w), Map(C, x.h, x.w), {}};
  for (int64_t k = 0; k < C; ++k) {
    for (int64_t y = 0; y < x.h; ++y) {
      for (int64_t xx = 0; xx < x.w; ++xx) {
        const double i = sigmoid(gate(z, 0, C, k, y, xx));
        const double f = sigmoid(gate(z, 1, C, k, y, xx));
        const double g = std::tanh(gate(z, 2, C, k, y, xx));
        const double o = sigmoid(gate(z, 3, C, k, y, xx));
        const double c = f * s.c.at(k, y, xx) + i * g;
        out.c.at(k, y, xx) = c;
        out.h.at(k, y, xx) = o * std::tanh(c);
      }
    }
  }
  return out;
}

inline State gru(const Map& x, const State& s, const msf::CellParams& p) {
  const int64_t C = p.hidden_channels;
  const Map z = conv(cat(x, s.h), p.gates);
  Map reset_h(C, x.h, x.w);
  for (int64_t k = 0; k < C; ++k)
    for (int64_t y = 0; y < x.h; ++y)
      for (int64_t xx = 0; xx < x.w; ++xx) reset_h.at(k, y, xx) = sigmoid(gate(z, 0, C, k, y, xx)) * s.h.at(k, y, xx);
  const Map cand = conv(cat(x, reset_h), p.candidate);
  State out{Map(C, x.h, x.w), {}, {}};
  for (int64_t k = 0; k < C; ++k) {
    for (int64_t y = 0; y < x.h; ++y) {
      for (int64_t xx = 0; xx < x.w; ++xx) {
        const double u = sigmoid(gate(z, 1, C, k, y, xx));
        out.h.at(k, y, xx) = (1.0 - u) * s.h.at(k, y, xx) + u * std::tanh(cand.at(k, y, xx));
      }
    }
  }
  return out;
}

inline State st_lstm(const Map& x, const State& s, const msf::CellParams& p) {
  const int64_t C = p.hidden_channels;
  const Map z = conv(cat(x, s.h), p.gates);
  const Map zm = conv(cat(x, s.m), p.st_gates);
  State out{Map(C, x.h, x.w), Map(C, x.h, x.w), Map(C, x.h, x.w)};
  for (int64_t k = 0; k < C; ++k) {
    for (int64_t y = 0; y < x.h; ++y) {
      for (int64_t xx = 0; xx < x.w; ++xx) {
        const double i = sigmoid(gate(z, 0, C, k, y, xx));
        const double f = sigmoid(gate(z, 1, C, k, y, xx));
        const double g = std::tanh(gate(z, 2, C, k, y, xx));
        out.c.at(k, y, xx) = f * s.c.at(k, y, xx) + i * g;
        const double im = sigmoid(gate(zm, 0, C, k, y, xx));
        const double fm = sigmoid(gate(zm, 1, C, k, y, xx));
        const double gm = std::tanh(gate(zm, 2, C, k, y, xx));
        out.m.at(k, y, xx) = fm * s.m.at(k, y, xx) + im * gm;
      }
    }
  }
  const Map both = cat(out.c, out.m);
  const Map om = conv(both, p.out_memory);
  const Map fused = conv(both, p.fuse);
  for (int64_t k = 0; k < C; ++k) {
    for (int64_t y = 0; y < x.h; ++y) {
      for (int64_t xx = 0; xx < x.w; ++xx) {
        const double o = sigmoid(gate(z, 3, C, k, y, xx) + om.at(k, y, xx));
        out.h.at(k, y, xx) = o * std::tanh(fused.at(k, y, xx));
      }
    }
  }
  return out;
}

inline State cell(const Map& x, const State& s, const msf::CellParams& p) {
  switch (p.kind) {
    case msf::CellKind::ConvLstm: return lstm(x, s, p);
    case msf::CellKind::ConvGru: return gru(x, s, p);
    case msf::CellKind::StLstm: return st_lstm(x, s, p);
  }
  return {};
}

inline Map fuse(const msf::FusionParams& p, const Map& a, const Map& b) {
  Map out(a.c, a.h, a.w);
  switch (p.kind) {
    case msf::FusionKind::Sum:
      for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
      return out;
    case msf::FusionKind::Max:
      for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = std::max(a.v[i], b.v[i]);
      return out;
    case msf::FusionKind::Concat: return conv(cat(a, b), p.projection);
    case msf::FusionKind::Attention: {
      const Map logits = conv(cat(a, b), p.attention);
      for (int64_t y = 0; y < a.h; ++y) {
        for (int64_t x = 0; x < a.w; ++x) {
          const double la = logits.at(0, y, x), lb = logits.at(1, y, x);
          const double wa = std::exp(la) / (std::exp(la) + std::exp(lb));
          const double wb = std::exp(lb) / (std::exp(la) + std::exp(lb));
          for (int64_t k = 0; k < a.c; ++k) out.at(k, y, x) = wa * a.at(k, y, x) + wb * b.at(k, y, x);
        }
      }
      return out;
    }
  }
  return out;
}

}  // namespace ref
