#pragma once

// Checks shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "msf/cells.hpp"
#include "msf/data.hpp"
#include "msf/model.hpp"
#include "reference.hpp"
#include "test_util.hpp"

namespace testing {

inline msf::CellState random_state(msf::CellKind kind, msf::Shape shape, uint64_t seed) {
  msf::CellState s;
  s.hidden = msf::Var::constant(random_tensor(shape, seed));
  if (kind != msf::CellKind::ConvGru) s.memory = msf::Var::constant(random_tensor(shape, seed + 1));
  if (kind == msf::CellKind::StLstm) s.st_memory = msf::Var::constant(random_tensor(shape, seed + 2));
  return s;
}

// Worst relative gradient error of L = sum(y) over all cell parameters on a
// [1,4,4,4] instance with random parameters, input and state.
inline GradCheckResult cell_gradient_check(msf::CellKind kind, uint64_t seed = 7) {
  msf::Initializer init(seed);
  msf::CellParams p = msf::make_cell(kind, 4, 4, 3, init);
  randomize(p.params(), seed + 1, 0.5);
  const msf::Var x = msf::Var::constant(random_tensor({1, 4, 4, 4}, seed + 2));
  const msf::CellState s = random_state(kind, {1, 4, 4, 4}, seed + 3);
  return check_gradients(p.params(), [&] { return msf::ops::sum_all(msf::cell_step(x, s, p).output); });
}

// Straight-line two-level recurrence over scalar maps, batch element 0.
struct FlatLadder {
  const msf::ModelParams& m;
  ref::State pre1, mid1, post1, deep;

  ref::Map step(const ref::Map& frame) {
    const msf::LevelParams& top = m.levels[0];
    const msf::LevelParams& bottom = m.levels[1];
    const ref::Map h1 = ref::conv(frame, m.stem);
    pre1 = ref::cell(h1, pre1, top.pre);
    ref::Map h2 = ref::conv(pre1.h, top.down, 2);
    for (auto& v : h2.v) v = ref::leaky(v);
    deep = ref::cell(h2, deep, bottom.pre);
    mid1 = ref::cell(pre1.h, mid1, top.mid);
    ref::Map up = ref::conv(ref::nearest2x(deep.h), top.up);
    for (auto& v : up.v) v = ref::leaky(v);
    post1 = ref::cell(ref::fuse(top.fusion, mid1.h, up), post1, top.post);
    ref::Map out = ref::conv(post1.h, m.head);
    for (auto& v : out.v) v = ref::sigmoid(v);
    return out;
  }
};

// Largest elementwise gap between ladder_step and the flat transcription for a
// k=2 model on 4x4 frames over `steps` consecutive steps.
inline double ladder_oracle_gap(msf::CellKind cell, msf::FusionKind fusion, int steps = 3, uint64_t seed = 11) {
  msf::ModelConfig cfg;
  cfg.levels = 2;
  cfg.channels = {3, 4};
  cfg.cell = cell;
  cfg.fusion = fusion;
  cfg.height = 4;
  cfg.width = 4;
  const msf::ModelParams model = msf::make_model(cfg, seed);
  randomize(model.params(), seed + 1, 0.6);

  msf::LadderState state = msf::LadderState::zeros(cfg, 1);
  FlatLadder flat{model, ref::state_from(state.levels[0].pre), ref::state_from(state.levels[0].mid),
                  ref::state_from(state.levels[0].post), ref::state_from(state.levels[1].pre)};
  double gap = 0.0;
  for (int t = 0; t < steps; ++t) {
    const msf::Tensor frame = random_tensor({1, 1, 4, 4}, seed + 10 + static_cast<uint64_t>(t), 0.0, 1.0);
    msf::NoGradGuard guard;
    msf::LadderStep got = msf::ladder_step(msf::Var::constant(frame), state, model);
    state = got.state;
    const ref::Map want = flat.step(ref::from_tensor(frame));
    for (size_t i = 0; i < want.v.size(); ++i) {
      gap = std::max(gap, std::abs(got.frame.value()[static_cast<int64_t>(i)] - want.v[i]));
    }
    // Internal state agrees too, not just the rendered frame.
    const ref::Map post = ref::from_tensor(state.levels[0].post.hidden.value());
    for (size_t i = 0; i < post.v.size(); ++i) gap = std::max(gap, std::abs(post.v[i] - flat.post1.h.v[i]));
  }
  return gap;
}

struct GeneratorAudit {
  bool shape_ok = true;
  bool range_ok = true;
  bool contained = true;
  bool speed_conserved = true;
  bool bounce_consistent = true;
  bool composited = true;
  std::string first_failure;

  bool ok() const { return shape_ok && range_ok && contained && speed_conserved && bounce_consistent && composited; }
  void fail(bool& flag, const std::string& what) {
    if (flag && first_failure.empty()) first_failure = what;
    flag = false;
  }
};

// Re-derives every frame from the recorded tracks and checks the generator
// invariants: values in [0, 1], glyphs fully inside the frame, constant speed
// per digit, trajectories that follow the hand-stepped bounce rule, and frames
// equal to the per-pixel max over separately rasterized digits.
inline GeneratorAudit audit_moving_mnist(const msf::MovingMnist& gen, const msf::MovingSpec& spec,
                                         const msf::DigitSet& digits) {
  GeneratorAudit a;
  const auto& d = gen.data;
  if (d.count != spec.count || d.length != spec.length || d.channels != 1 || d.height != spec.frame_size ||
      d.width != spec.frame_size || gen.tracks.size() != static_cast<size_t>(spec.count)) {
    a.fail(a.shape_ok, "dataset shape");
    return a;
  }
  for (float v : d.values) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      a.fail(a.range_ok, "pixel outside [0, 1]");
      break;
    }
  }
  const double limit = static_cast<double>(spec.frame_size - digits.size);
  const int64_t px = spec.frame_size * spec.frame_size;
  std::vector<float> raster(static_cast<size_t>(px));
  for (int64_t s = 0; s < spec.count; ++s) {
    const auto& tracks = gen.tracks[static_cast<size_t>(s)];
    if (tracks.size() != static_cast<size_t>(spec.num_digits)) a.fail(a.shape_ok, "digit count");
    for (const auto& tr : tracks) {
      const double speed0 = std::hypot(tr.vx[0], tr.vy[0]);
      for (int64_t t = 0; t < spec.length; ++t) {
        const size_t i = static_cast<size_t>(t);
        const int64_t ox = msf::raster_offset(tr.x[i]), oy = msf::raster_offset(tr.y[i]);
        if (ox < 0 || oy < 0 || ox + digits.size > spec.frame_size || oy + digits.size > spec.frame_size) {
          a.fail(a.contained, "digit clipped at sequence " + std::to_string(s));
        }
        if (std::abs(std::hypot(tr.vx[i], tr.vy[i]) - speed0) > 1e-12) a.fail(a.speed_conserved, "speed drift");
        if (t + 1 < spec.length) {
          // Hand-stepped wall rule: stop at the wall, flip that component.
          double nx = tr.x[i] + tr.vx[i], nvx = tr.vx[i];
          if (nx >= limit && tr.vx[i] > 0) nx = limit, nvx = -tr.vx[i];
          else if (nx <= 0 && tr.vx[i] < 0) nx = 0, nvx = -tr.vx[i];
          double ny = tr.y[i] + tr.vy[i], nvy = tr.vy[i];
          if (ny >= limit && tr.vy[i] > 0) ny = limit, nvy = -tr.vy[i];
          else if (ny <= 0 && tr.vy[i] < 0) ny = 0, nvy = -tr.vy[i];
          if (nx != tr.x[i + 1] || ny != tr.y[i + 1] || nvx != tr.vx[i + 1] || nvy != tr.vy[i + 1]) {
            a.fail(a.bounce_consistent, "trajectory departs from the bounce rule");
          }
        }
      }
    }
    for (int64_t t = 0; t < spec.length; ++t) {
      std::fill(raster.begin(), raster.end(), 0.0f);
      for (const auto& tr : tracks) {
        const int64_t ox = msf::raster_offset(tr.x[static_cast<size_t>(t)]);
        const int64_t oy = msf::raster_offset(tr.y[static_cast<size_t>(t)]);
        for (int64_t y = 0; y < digits.size; ++y)
          for (int64_t x = 0; x < digits.size; ++x) {
            const int64_t fy = oy + y, fx = ox + x;
            if (fy < 0 || fx < 0 || fy >= spec.frame_size || fx >= spec.frame_size) continue;
            float& dst = raster[static_cast<size_t>(fy * spec.frame_size + fx)];
            dst = std::max(dst, digits.at(tr.digit, y, x));
          }
      }
      const float* frame = d.values.data() + (s * spec.length + t) * px;
      if (!std::equal(raster.begin(), raster.end(), frame)) a.fail(a.composited, "frame is not the max composite");
    }
  }
  return a;
}

}  // namespace testing
