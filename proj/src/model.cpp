#include "msf/model.hpp"

#include "msf/error.hpp"

namespace msf {

using nlohmann::json;

void ModelConfig::validate() const {
  if (levels < 1) throw ConfigError("levels must be >= 1, got " + std::to_string(levels));
  if (static_cast<int64_t>(channels.size()) != levels) {
    throw ConfigError("channels lists " + std::to_string(channels.size()) + " widths for " +
                      std::to_string(levels) + " levels");
  }
  for (auto c : channels) {
    if (c < 1) throw ConfigError("channel widths must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(kernel));
  if (image_channels < 1) throw ConfigError("image_channels must be positive");
  if (height < 1 || width < 1) throw ConfigError("frame size must be positive");
  const int64_t factor = int64_t{1} << (levels - 1);
  if (height % factor != 0 || width % factor != 0) {
    throw ConfigError("frame size " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by 2^(levels-1) = " + std::to_string(factor));
  }
  if (input_length < 1) throw ConfigError("input_length must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"levels", c.levels},
           {"channels", c.channels},
           {"cell", std::string(cell_kind_name(c.cell))},
           {"fusion", std::string(fusion_kind_name(c.fusion))},
           {"kernel", c.kernel},
           {"image_channels", c.image_channels},
           {"height", c.height},
           {"width", c.width},
           {"input_length", c.input_length},
           {"horizon", c.horizon}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  c.levels = j.value("levels", d.levels);
  if (j.contains("channels")) {
    c.channels = j.at("channels").get<std::vector<int64_t>>();
  } else {
    c.channels.assign(static_cast<size_t>(std::max<int64_t>(c.levels, 0)), 64);
  }
  c.cell = parse_cell_kind(j.value("cell", std::string(cell_kind_name(d.cell))));
  c.fusion = parse_fusion_kind(j.value("fusion", std::string(fusion_kind_name(d.fusion))));
  c.kernel = j.value("kernel", d.kernel);
  c.image_channels = j.value("image_channels", d.image_channels);
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.input_length = j.value("input_length", d.input_length);
  c.horizon = j.value("horizon", d.horizon);
}

ParamList ModelParams::params() const {
  ParamList out;
  append_params(out, "stem", stem.params());
  for (size_t l = 0; l < levels.size(); ++l) {
    const auto& lv = levels[l];
    const std::string prefix = "level" + std::to_string(l);
    append_params(out, prefix + ".pre", lv.pre.params());
    if (l + 1 < levels.size()) {
      append_params(out, prefix + ".down", lv.down.params());
      append_params(out, prefix + ".mid", lv.mid.params());
      append_params(out, prefix + ".up", lv.up.params());
      append_params(out, prefix + ".fusion", lv.fusion.params());
      append_params(out, prefix + ".post", lv.post.params());
    }
  }
  append_params(out, "head", head.params());
  return out;
}

ModelParams make_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Initializer init(seed);
  ModelParams m;
  m.config = config;
  const int64_t k = config.kernel;
  m.stem = init.conv(config.channels[0], config.image_channels, k);
  for (int64_t l = 0; l < config.levels; ++l) {
    const int64_t c = config.channels[static_cast<size_t>(l)];
    LevelParams lv;
    lv.pre = make_cell(config.cell, c, c, k, init);
    if (l + 1 < config.levels) {
      const int64_t deeper = config.channels[static_cast<size_t>(l + 1)];
      lv.down = init.conv(deeper, c, k);
      lv.mid = make_cell(config.cell, c, c, k, init);
      lv.up = init.conv(c, deeper, k);
      lv.fusion = make_fusion(config.fusion, c, init);
      lv.post = make_cell(config.cell, c, c, k, init);
    }
    m.levels.push_back(std::move(lv));
  }
  m.head = init.conv(config.image_channels, config.channels[0], k);
  return m;
}

ModelParams clone_model(const ModelParams& model) {
  ModelParams copy = make_model(model.config, 0);
  const ParamList src = model.params();
  const ParamList dst = copy.params();
  for (size_t i = 0; i < src.size(); ++i) {
    Var v = dst[i].var;
    v.mutable_value() = src[i].var.value();
  }
  return copy;
}

LadderState LadderState::zeros(const ModelConfig& config, int64_t batch) {
  LadderState s;
  for (int64_t l = 0; l < config.levels; ++l) {
    const int64_t c = config.channels[static_cast<size_t>(l)];
    const int64_t h = config.level_height(l), w = config.level_width(l);
    LevelState lv;
    lv.pre = CellState::zeros(config.cell, batch, c, h, w);
    if (l + 1 < config.levels) {
      lv.mid = CellState::zeros(config.cell, batch, c, h, w);
      lv.post = CellState::zeros(config.cell, batch, c, h, w);
    }
    s.levels.push_back(std::move(lv));
  }
  return s;
}

Var downsample(const Var& x, const ConvParams& p) {
  require_rank(x.value(), 4, "downsample");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ConfigError("downsample needs even spatial dims, got " + to_string(x.shape()));
  }
  return ops::leaky_relu(p.apply(x, 2), kLeakySlope);
}

Var upsample(const Var& x, const ConvParams& p) {
  require_rank(x.value(), 4, "upsample");
  return ops::leaky_relu(p.apply(ops::upsample_nearest2x(x)), kLeakySlope);
}

namespace {

// Advances level `l` from features H^l_t to H^l_{t+1}, writing new cell
// states into `next`.
Var advance_level(size_t l, const Var& features, const LadderState& state, LadderState& next,
                  const ModelParams& params) {
  const LevelParams& lp = params.levels[l];
  const LevelState& ls = state.levels[l];
  LevelState& out = next.levels[l];

  CellStep refined = cell_step(features, ls.pre, lp.pre);
  out.pre = refined.state;
  if (l + 1 == params.levels.size()) return refined.output;

  Var deeper = advance_level(l + 1, downsample(refined.output, lp.down), state, next, params);
  CellStep predicted = cell_step(refined.output, ls.mid, lp.mid);
  out.mid = predicted.state;
  Var fused = fuse(lp.fusion, predicted.output, upsample(deeper, lp.up));
  CellStep result = cell_step(fused, ls.post, lp.post);
  out.post = result.state;
  return result.output;
}

}  // namespace

LadderStep ladder_step(const Var& frame, const LadderState& state, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  require_rank(frame.value(), 4, "ladder_step frame");
  if (frame.dim(1) != cfg.image_channels || frame.dim(2) != cfg.height || frame.dim(3) != cfg.width) {
    throw ContractError("ladder_step: frame " + to_string(frame.shape()) + " does not match model config [B," +
                        std::to_string(cfg.image_channels) + "," + std::to_string(cfg.height) + "," +
                        std::to_string(cfg.width) + "]");
  }
  if (state.levels.size() != params.levels.size() ||
      params.levels.size() != static_cast<size_t>(cfg.levels)) {
    throw ContractError("ladder_step: state has " + std::to_string(state.levels.size()) + " levels, model has " +
                        std::to_string(params.levels.size()));
  }
  LadderState next;
  next.levels.resize(state.levels.size());
  Var top = advance_level(0, params.stem.apply(frame), state, next, params);
  return {ops::sigmoid(params.head.apply(top)), std::move(next)};
}

RolloutGraph rollout_graph(const Tensor& inputs, const ModelParams& params, int64_t horizon) {
  if (horizon < 1) throw ConfigError("rollout horizon must be >= 1, got " + std::to_string(horizon));
  require_rank(inputs, 5, "rollout inputs");
  const int64_t steps = inputs.dim(1);
  if (steps < 1) throw ContractError("rollout needs at least one input frame");

  RolloutGraph out;
  LadderState state = LadderState::zeros(params.config, inputs.dim(0));
  Var prediction;
  for (int64_t t = 0; t < steps; ++t) {
    LadderStep step = ladder_step(Var::constant(inputs.time_slice(t)), state, params);
    state = std::move(step.state);
    prediction = step.frame;
    if (t + 1 < steps) out.warmup.push_back(prediction);
  }
  out.horizon.push_back(prediction);
  for (int64_t n = 1; n < horizon; ++n) {
    LadderStep step = ladder_step(prediction, state, params);
    state = std::move(step.state);
    prediction = step.frame;
    out.horizon.push_back(prediction);
  }
  return out;
}

Tensor rollout(const Tensor& inputs, const ModelParams& params, int64_t horizon) {
  NoGradGuard guard;
  RolloutGraph graph = rollout_graph(inputs, params, horizon);
  std::vector<Tensor> frames;
  frames.reserve(graph.horizon.size());
  for (const auto& v : graph.horizon) frames.push_back(v.value());
  return Tensor::stack_time(frames);
}

PixelSpaceStep pixel_space_step(const Var& frame, const CellState& state, const ConvParams& stem,
                                const CellParams& cell, const ConvParams& head) {
  CellStep step = cell_step(stem.apply(frame), state, cell);
  return {ops::sigmoid(head.apply(step.output)), step.state};
}

}  // namespace msf
