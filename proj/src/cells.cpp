#include "msf/cells.hpp"

#include "msf/error.hpp"

namespace msf {

namespace {

using ops::add;
using ops::mul;
using ops::sigmoid;
using ops::slice_channels;

void check_state_tensor(const Var& x, const Var& state, const char* what, const CellParams& p) {
  if (!state.defined()) throw ContractError(std::string("cell state is missing ") + what);
  const Shape& xs = x.shape();
  const Shape& ss = state.shape();
  if (ss.size() != 4 || ss[0] != xs[0] || ss[2] != xs[2] || ss[3] != xs[3]) {
    throw ContractError(std::string("cell ") + what + " " + to_string(ss) + " does not match input " +
                        to_string(xs));
  }
  if (ss[1] != p.hidden_channels) {
    throw ConfigError(std::string("cell ") + what + " has " + std::to_string(ss[1]) +
                      " channels, configured width is " + std::to_string(p.hidden_channels));
  }
}

void check_input(const Var& x, const CellParams& p) {
  if (!x.defined() || x.value().rank() != 4) throw ContractError("cell input must be a [B,C,H,W] feature map");
  if (x.dim(1) != p.in_channels) {
    throw ContractError("cell input has " + std::to_string(x.dim(1)) + " channels, expected " +
                        std::to_string(p.in_channels));
  }
}

void check_kind(const CellParams& p, CellKind expected) {
  if (p.kind != expected) {
    throw ContractError(std::string("parameters are for ") + std::string(cell_kind_name(p.kind)) + ", not " +
                        std::string(cell_kind_name(expected)));
  }
}

void set_bias_block(ConvParams& conv, int64_t block, int64_t width, double value) {
  auto& b = conv.bias.mutable_value();
  for (int64_t i = block * width; i < (block + 1) * width; ++i) b[i] = value;
}

}  // namespace

std::string_view cell_kind_name(CellKind kind) {
  switch (kind) {
    case CellKind::ConvLstm: return "convlstm";
    case CellKind::ConvGru: return "convgru";
    case CellKind::StLstm: return "st-lstm";
  }
  return "unknown";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "convlstm") return CellKind::ConvLstm;
  if (name == "convgru") return CellKind::ConvGru;
  if (name == "st-lstm" || name == "stlstm" || name == "predrnn") return CellKind::StLstm;
  throw ConfigError("unknown cell kind '" + std::string(name) + "' (expected convlstm|convgru|st-lstm)");
}

CellState CellState::zeros(CellKind kind, int64_t batch, int64_t channels, int64_t height, int64_t width) {
  const Shape shape{batch, channels, height, width};
  CellState s;
  s.hidden = Var::constant(Tensor::zeros(shape));
  if (kind != CellKind::ConvGru) s.memory = Var::constant(Tensor::zeros(shape));
  if (kind == CellKind::StLstm) s.st_memory = Var::constant(Tensor::zeros(shape));
  return s;
}

ParamList CellParams::params() const {
  ParamList out;
  append_params(out, "gates", gates.params());
  if (kind == CellKind::ConvGru) append_params(out, "candidate", candidate.params());
  if (kind == CellKind::StLstm) {
    append_params(out, "st_gates", st_gates.params());
    append_params(out, "out_memory", out_memory.params());
    append_params(out, "fuse", fuse.params());
  }
  return out;
}

CellParams make_cell(CellKind kind, int64_t in_channels, int64_t hidden_channels, int64_t kernel, Initializer& init) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("cell kernel size must be odd, got " + std::to_string(kernel));
  if (in_channels < 1 || hidden_channels < 1) throw ConfigError("cell channel counts must be positive");
  CellParams p;
  p.kind = kind;
  p.in_channels = in_channels;
  p.hidden_channels = hidden_channels;
  p.kernel = kernel;
  const int64_t c = hidden_channels;
  switch (kind) {
    case CellKind::ConvLstm:
      p.gates = init.conv(4 * c, in_channels + c, kernel);
      set_bias_block(p.gates, 1, c, 1.0);
      break;
    case CellKind::ConvGru:
      p.gates = init.conv(2 * c, in_channels + c, kernel);
      p.candidate = init.conv(c, in_channels + c, kernel);
      break;
    case CellKind::StLstm:
      p.gates = init.conv(4 * c, in_channels + c, kernel);
      set_bias_block(p.gates, 1, c, 1.0);
      p.st_gates = init.conv(3 * c, in_channels + c, kernel);
      set_bias_block(p.st_gates, 1, c, 1.0);
      p.out_memory = init.conv(c, 2 * c, kernel);
      p.fuse = init.conv(c, 2 * c, 1);
      break;
  }
  return p;
}

CellStep conv_lstm_step(const Var& x, const CellState& s, const CellParams& p) {
  check_kind(p, CellKind::ConvLstm);
  check_input(x, p);
  check_state_tensor(x, s.hidden, "hidden", p);
  check_state_tensor(x, s.memory, "memory", p);
  const int64_t c = p.hidden_channels;

  Var z = p.gates.apply(ops::concat_channels({x, s.hidden}));
  Var i = sigmoid(slice_channels(z, 0, c));
  Var f = sigmoid(slice_channels(z, c, c));
  Var g = ops::tanh(slice_channels(z, 2 * c, c));
  Var o = sigmoid(slice_channels(z, 3 * c, c));

  CellState next;
  next.memory = add(mul(f, s.memory), mul(i, g));
  next.hidden = mul(o, ops::tanh(next.memory));
  return {next.hidden, next};
}

CellStep conv_gru_step(const Var& x, const CellState& s, const CellParams& p) {
  check_kind(p, CellKind::ConvGru);
  check_input(x, p);
  check_state_tensor(x, s.hidden, "hidden", p);
  const int64_t c = p.hidden_channels;

  Var z = p.gates.apply(ops::concat_channels({x, s.hidden}));
  Var reset = sigmoid(slice_channels(z, 0, c));
  Var update = sigmoid(slice_channels(z, c, c));
  Var candidate = ops::tanh(p.candidate.apply(ops::concat_channels({x, mul(reset, s.hidden)})));

  CellState next;
  next.hidden = add(mul(ops::one_minus(update), s.hidden), mul(update, candidate));
  return {next.hidden, next};
}

CellStep st_lstm_step(const Var& x, const CellState& s, const CellParams& p) {
  check_kind(p, CellKind::StLstm);
  check_input(x, p);
  check_state_tensor(x, s.hidden, "hidden", p);
  check_state_tensor(x, s.memory, "memory", p);
  check_state_tensor(x, s.st_memory, "st_memory", p);
  const int64_t c = p.hidden_channels;

  Var z = p.gates.apply(ops::concat_channels({x, s.hidden}));
  Var i = sigmoid(slice_channels(z, 0, c));
  Var f = sigmoid(slice_channels(z, c, c));
  Var g = ops::tanh(slice_channels(z, 2 * c, c));

  Var zm = p.st_gates.apply(ops::concat_channels({x, s.st_memory}));
  Var im = sigmoid(slice_channels(zm, 0, c));
  Var fm = sigmoid(slice_channels(zm, c, c));
  Var gm = ops::tanh(slice_channels(zm, 2 * c, c));

  CellState next;
  next.memory = add(mul(f, s.memory), mul(i, g));
  next.st_memory = add(mul(fm, s.st_memory), mul(im, gm));

  Var both = ops::concat_channels({next.memory, next.st_memory});
  Var o = sigmoid(add(slice_channels(z, 3 * c, c), p.out_memory.apply(both)));
  next.hidden = mul(o, ops::tanh(p.fuse.apply(both)));
  return {next.hidden, next};
}

CellStep cell_step(const Var& x, const CellState& s, const CellParams& p) {
  switch (p.kind) {
    case CellKind::ConvLstm: return conv_lstm_step(x, s, p);
    case CellKind::ConvGru: return conv_gru_step(x, s, p);
    case CellKind::StLstm: return st_lstm_step(x, s, p);
  }
  throw ContractError("unknown cell kind");
}

}  // namespace msf
