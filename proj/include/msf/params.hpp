#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "msf/autograd.hpp"

namespace msf {

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

// Appends `src` to `dst` with every name prefixed by `prefix`.
void append_params(ParamList& dst, const std::string& prefix, const ParamList& src);

// Rounds every parameter value to the nearest float32 so that checkpoints,
// which store float32, reproduce the in-memory model bit for bit.
void quantize_to_float32(const ParamList& params);

void zero_grads(const ParamList& params);
int64_t parameter_count(const ParamList& params);

// Convolution weight [out, in, k, k] plus bias [out].
struct ConvParams {
  Var weight;
  Var bias;

  int64_t out_channels() const { return weight.dim(0); }
  int64_t in_channels() const { return weight.dim(1); }
  int64_t kernel() const { return weight.dim(2); }

  // Same padding for odd kernels.
  Var apply(const Var& x, int stride = 1) const;
  ParamList params() const { return {{"weight", weight}, {"bias", bias}}; }
};

// Seeded source of initial parameter values. Kernels draw from
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are constants.
class Initializer {
 public:
  explicit Initializer(uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, double bound);
  Var kernel(int64_t out_channels, int64_t in_channels, int64_t ksize);
  static Var bias(int64_t channels, double value = 0.0);
  ConvParams conv(int64_t out_channels, int64_t in_channels, int64_t ksize);

 private:
  std::mt19937_64 rng_;
};

// splitmix64 mixing step; derives independent child seeds from a master seed.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

}  // namespace msf
