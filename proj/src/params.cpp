#include "msf/params.hpp"

#include <cmath>

#include "msf/error.hpp"

namespace msf {

void append_params(ParamList& dst, const std::string& prefix, const ParamList& src) {
  for (const auto& p : src) dst.push_back({prefix + "." + p.name, p.var});
}

void quantize_to_float32(const ParamList& params) {
  for (const auto& p : params) {
    Var v = p.var;
    for (auto& x : v.mutable_value().data()) x = static_cast<double>(static_cast<float>(x));
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    Var v = p.var;
    v.zero_grad();
  }
}

int64_t parameter_count(const ParamList& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

Var ConvParams::apply(const Var& x, int stride) const {
  const int64_t k = kernel();
  if (k % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(k));
  return ops::conv2d(x, weight, bias, stride, static_cast<int>(k / 2));
}

Tensor Initializer::uniform(Shape shape, double bound) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : t.data()) x = static_cast<double>(static_cast<float>(dist(rng_)));
  return t;
}

Var Initializer::kernel(int64_t out_channels, int64_t in_channels, int64_t ksize) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * ksize * ksize));
  return Var::parameter(uniform({out_channels, in_channels, ksize, ksize}, bound));
}

Var Initializer::bias(int64_t channels, double value) { return Var::parameter(Tensor({channels}, value)); }

ConvParams Initializer::conv(int64_t out_channels, int64_t in_channels, int64_t ksize) {
  return {kernel(out_channels, in_channels, ksize), bias(out_channels)};
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace msf
