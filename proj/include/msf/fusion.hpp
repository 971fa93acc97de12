#pragma once

#include <string>
#include <string_view>

#include "msf/autograd.hpp"
#include "msf/params.hpp"

namespace msf {

enum class FusionKind { Sum, Concat, Max, Attention };

std::string_view fusion_kind_name(FusionKind kind);
// Accepts "sum", "concat" (or "concatenate"), "max", "attention".
FusionKind parse_fusion_kind(std::string_view name);

// Learned part of a fusion operator. Sum and Max carry no parameters.
//   Concat     projection [C, 2C, 1, 1] applied to [a; b], no nonlinearity
//   Attention  attention  [2, 2C, 1, 1] producing one logit per branch
struct FusionParams {
  FusionKind kind = FusionKind::Sum;
  int64_t channels = 0;
  ConvParams projection;
  ConvParams attention;

  ParamList params() const;
};

FusionParams make_fusion(FusionKind kind, int64_t channels, Initializer& init);

// Combines the same-level prediction `a` with the upsampled deeper prediction
// `b`. Both must be [B, C, H, W]; the result has the same shape.
Var fuse(const FusionParams& p, const Var& a, const Var& b);

// Parameter-free kinds only (Sum, Max).
Var fuse(FusionKind kind, const Var& a, const Var& b);

// Per-location branch weights [B, 2, H, W] used by Attention fusion.
Var attention_weights(const FusionParams& p, const Var& a, const Var& b);

}  // namespace msf
