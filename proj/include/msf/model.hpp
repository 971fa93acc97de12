#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "msf/autograd.hpp"
#include "msf/cells.hpp"
#include "msf/fusion.hpp"
#include "msf/params.hpp"

namespace msf {

inline constexpr double kLeakySlope = 0.01;

struct ModelConfig {
  int64_t levels = 4;
  std::vector<int64_t> channels{64, 64, 64, 64};
  CellKind cell = CellKind::ConvLstm;
  FusionKind fusion = FusionKind::Concat;
  int64_t kernel = 3;
  int64_t image_channels = 1;
  int64_t height = 64;
  int64_t width = 64;
  int64_t input_length = 10;
  int64_t horizon = 10;

  // Throws ConfigError on any violated invariant, including spatial sizes
  // that are not divisible by 2^(levels-1).
  void validate() const;
  int64_t level_height(int64_t level) const { return height >> level; }
  int64_t level_width(int64_t level) const { return width >> level; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Parameters of one level of the ladder. The deepest level only uses `pre`
// as its single transition cell; down/up/mid/post/fusion stay empty there.
struct LevelParams {
  CellParams pre;   // features at t -> refined features at t
  CellParams mid;   // refined features at t -> predicted features at t+1
  CellParams post;  // fused prediction -> level output at t+1
  ConvParams down;  // C_l -> C_{l+1}, stride 2
  ConvParams up;    // C_{l+1} -> C_l after nearest x2
  FusionParams fusion;
};

struct ModelParams {
  ModelConfig config;
  ConvParams stem;  // C_img -> C_1
  ConvParams head;  // C_1 -> C_img, followed by a sigmoid
  std::vector<LevelParams> levels;

  // Stable, ordered list of every trainable tensor. Names are checkpoint keys.
  ParamList params() const;
};

ModelParams make_model(const ModelConfig& config, uint64_t seed);
// Deep copy; the result shares no parameter storage with `model`.
ModelParams clone_model(const ModelParams& model);

struct LevelState {
  CellState pre;
  CellState mid;
  CellState post;
};

struct LadderState {
  std::vector<LevelState> levels;

  static LadderState zeros(const ModelConfig& config, int64_t batch);
};

// Stride-2 convolution followed by a leaky rectifier. Halves H and W.
Var downsample(const Var& x, const ConvParams& p);
// Nearest-neighbour x2, convolution, leaky rectifier. Doubles H and W.
Var upsample(const Var& x, const ConvParams& p);

struct LadderStep {
  Var frame;  // predicted next frame [B, C_img, H, W], values in [0, 1]
  LadderState state;
};

// One time step of the multi-level recurrence: for every level but the
// deepest,
//   refined   = pre(H_t)
//   deeper    = ladder(down(refined))          (recursion into level l+1)
//   predicted = mid(refined)
//   H_{t+1}   = post(fuse(predicted, up(deeper)))
// and the deepest level advances with its single cell. Level 1 reads a stem
// embedding of the frame; its output passes through the head and a sigmoid.
LadderStep ladder_step(const Var& frame, const LadderState& state, const ModelParams& params);

struct RolloutGraph {
  std::vector<Var> warmup;   // predictions of frames 2..T (T-1 entries)
  std::vector<Var> horizon;  // predictions of frames T+1..T+N
};

// Consumes the T ground-truth frames of `inputs` [B, T, C, H, W], then feeds
// each prediction back for the remaining horizon-1 steps.
RolloutGraph rollout_graph(const Tensor& inputs, const ModelParams& params, int64_t horizon);

// Inference-only rollout; returns [B, horizon, C, H, W].
Tensor rollout(const Tensor& inputs, const ModelParams& params, int64_t horizon);

// Standalone single-space predictor: stem, one cell, head. Used as the
// reference for the one-level configuration.
struct PixelSpaceStep {
  Var frame;
  CellState state;
};
PixelSpaceStep pixel_space_step(const Var& frame, const CellState& state, const ConvParams& stem,
                                const CellParams& cell, const ConvParams& head);

}  // namespace msf
