#pragma once

#include <string>
#include <string_view>

#include "msf/autograd.hpp"
#include "msf/params.hpp"

namespace msf {

enum class CellKind { ConvLstm, ConvGru, StLstm };

std::string_view cell_kind_name(CellKind kind);
// Accepts "convlstm", "convgru", "st-lstm" (also "stlstm", "predrnn").
CellKind parse_cell_kind(std::string_view name);

// Recurrent state of one cell. `memory` is used by ConvLSTM and ST-LSTM,
// `st_memory` (the spatiotemporal memory) by ST-LSTM only.
struct CellState {
  Var hidden;
  Var memory;
  Var st_memory;

  static CellState zeros(CellKind kind, int64_t batch, int64_t channels, int64_t height, int64_t width);
};

// Convolution parameters of one cell. Gate convolutions read the channel
// concatenation [x; h] and have no peephole terms.
//
//   ConvLSTM  gates      [4C, Cin+C, k, k]  channel blocks (i, f, g, o)
//   ConvGRU   gates      [2C, Cin+C, k, k]  channel blocks (r, z)
//             candidate  [C,  Cin+C, k, k]  reads [x; r*h]
//   ST-LSTM   gates      [4C, Cin+C, k, k]  (i, f, g, o) over [x; h]
//             st_gates   [3C, Cin+C, k, k]  (i', f', g') over [x; M]
//             out_memory [C,  2C,    k, k]  over [c'; M'], added to o
//             fuse       [C,  2C,    1, 1]  over [c'; M']
struct CellParams {
  CellKind kind = CellKind::ConvLstm;
  int64_t in_channels = 0;
  int64_t hidden_channels = 0;
  int64_t kernel = 3;

  ConvParams gates;
  ConvParams candidate;
  ConvParams st_gates;
  ConvParams out_memory;
  ConvParams fuse;

  ParamList params() const;
};

// Kernels get fan-in scaled uniform values; biases are zero except forget
// gates, which start at +1.
CellParams make_cell(CellKind kind, int64_t in_channels, int64_t hidden_channels, int64_t kernel, Initializer& init);

struct CellStep {
  Var output;
  CellState state;
};

CellStep conv_lstm_step(const Var& x, const CellState& s, const CellParams& p);
CellStep conv_gru_step(const Var& x, const CellState& s, const CellParams& p);
CellStep st_lstm_step(const Var& x, const CellState& s, const CellParams& p);

// Dispatches on p.kind.
CellStep cell_step(const Var& x, const CellState& s, const CellParams& p);

}  // namespace msf
