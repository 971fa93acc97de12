#include "msf/fusion.hpp"

#include "msf/error.hpp"

namespace msf {

std::string_view fusion_kind_name(FusionKind kind) {
  switch (kind) {
    case FusionKind::Sum: return "sum";
    case FusionKind::Concat: return "concat";
    case FusionKind::Max: return "max";
    case FusionKind::Attention: return "attention";
  }
  return "unknown";
}

FusionKind parse_fusion_kind(std::string_view name) {
  if (name == "sum") return FusionKind::Sum;
  if (name == "concat" || name == "concatenate") return FusionKind::Concat;
  if (name == "max") return FusionKind::Max;
  if (name == "attention") return FusionKind::Attention;
  throw ConfigError("unknown fusion kind '" + std::string(name) + "' (expected sum|concat|max|attention)");
}

ParamList FusionParams::params() const {
  ParamList out;
  if (kind == FusionKind::Concat) append_params(out, "projection", projection.params());
  if (kind == FusionKind::Attention) append_params(out, "attention", attention.params());
  return out;
}

FusionParams make_fusion(FusionKind kind, int64_t channels, Initializer& init) {
  if (channels < 1) throw ConfigError("fusion channel count must be positive");
  FusionParams p;
  p.kind = kind;
  p.channels = channels;
  if (kind == FusionKind::Concat) p.projection = init.conv(channels, 2 * channels, 1);
  if (kind == FusionKind::Attention) p.attention = init.conv(2, 2 * channels, 1);
  return p;
}

Var attention_weights(const FusionParams& p, const Var& a, const Var& b) {
  if (p.kind != FusionKind::Attention) throw ContractError("attention_weights needs attention fusion parameters");
  require_same_shape(a.value(), b.value(), "fuse");
  return ops::softmax_channels(p.attention.apply(ops::concat_channels({a, b})));
}

Var fuse(const FusionParams& p, const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "fuse");
  require_rank(a.value(), 4, "fuse");
  if (a.dim(1) != p.channels) {
    throw ContractError("fuse: inputs have " + std::to_string(a.dim(1)) + " channels, operator configured for " +
                        std::to_string(p.channels));
  }
  switch (p.kind) {
    case FusionKind::Sum:
    case FusionKind::Max: return fuse(p.kind, a, b);
    case FusionKind::Concat: return p.projection.apply(ops::concat_channels({a, b}));
    case FusionKind::Attention: {
      Var w = attention_weights(p, a, b);
      return ops::add(ops::mul_channel_broadcast(a, ops::slice_channels(w, 0, 1)),
                      ops::mul_channel_broadcast(b, ops::slice_channels(w, 1, 1)));
    }
  }
  throw ContractError("unknown fusion kind");
}

Var fuse(FusionKind kind, const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "fuse");
  switch (kind) {
    case FusionKind::Sum: return ops::add(a, b);
    case FusionKind::Max: return ops::maximum(a, b);
    default: throw ContractError("fusion kind '" + std::string(fusion_kind_name(kind)) + "' needs parameters");
  }
}

}  // namespace msf
