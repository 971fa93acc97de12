#include "msf/checkpoint.hpp"

#include <map>
#include <sstream>

#include "msf/error.hpp"
#include "msf/io.hpp"

namespace msf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "msf-checkpoint";
constexpr int kVersion = 1;

fs::path blob_path_for(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

std::string parameter_shape_diff(const ModelConfig& a, const ModelConfig& b) {
  std::map<std::string, Shape> sa, sb;
  for (const auto& p : make_model(a, 0).params()) sa[p.name] = p.var.shape();
  for (const auto& p : make_model(b, 0).params()) sb[p.name] = p.var.shape();
  std::ostringstream os;
  for (const auto& [name, shape] : sa) {
    auto it = sb.find(name);
    if (it == sb.end()) {
      os << "  " << name << ": " << to_string(shape) << " vs (absent)\n";
    } else if (it->second != shape) {
      os << "  " << name << ": " << to_string(shape) << " vs " << to_string(it->second) << "\n";
    }
  }
  for (const auto& [name, shape] : sb) {
    if (!sa.count(name)) os << "  " << name << ": (absent) vs " << to_string(shape) << "\n";
  }
  return os.str();
}

void save_checkpoint(const fs::path& manifest, const ModelParams& model, const json& extra) {
  const fs::path blob_path = blob_path_for(manifest);
  std::string blob;
  json entries = json::array();
  int64_t offset = 0;
  for (const auto& p : model.params()) {
    const Tensor& v = p.var.value();
    entries.push_back({{"name", p.name}, {"shape", v.shape()}, {"dtype", "float32"}, {"offset", offset}});
    for (double x : v.data()) put_f32(blob, static_cast<float>(x));
    offset += v.size();
  }
  json m{{"format", kFormat},
         {"version", kVersion},
         {"model", model.config},
         {"blob", blob_path.filename().string()},
         {"byte_order", "little"},
         {"elements", offset},
         {"params", entries},
         {"extra", extra}};
  write_file_atomic(blob_path, blob);
  write_file_atomic(manifest, m.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const fs::path& manifest, const std::optional<ModelConfig>& expected) {
  json m;
  try {
    m = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  if (m.value("format", "") != kFormat) throw DataError("not a checkpoint manifest: " + manifest.string());
  if (m.value("version", 0) != kVersion) throw DataError("unsupported checkpoint version");

  ModelConfig config;
  try {
    config = m.at("model").get<ModelConfig>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint model config is malformed: ") + e.what());
  }
  config.validate();
  if (expected && !(*expected == config)) {
    expected->validate();
    const std::string diff = parameter_shape_diff(config, *expected);
    if (!diff.empty()) {
      throw ConfigError("checkpoint does not match the requested model (checkpoint vs requested):\n" + diff);
    }
  }

  const fs::path blob_path = manifest.parent_path() / m.at("blob").get<std::string>();
  const std::string blob = read_file(blob_path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  LoadedCheckpoint out{make_model(config, 0), m.value("extra", json::object())};
  const ParamList params = out.model.params();
  const json& entries = m.at("params");
  if (entries.size() != params.size()) {
    throw DataError("checkpoint lists " + std::to_string(entries.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  std::ostringstream diff;
  for (size_t i = 0; i < params.size(); ++i) {
    const json& e = entries[i];
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    if (name != params[i].name || shape != params[i].var.shape()) {
      diff << "  " << name << " " << to_string(shape) << " vs expected " << params[i].name << " "
           << to_string(params[i].var.shape()) << "\n";
    }
    if (e.value("dtype", "") != "float32") throw DataError("unsupported dtype for parameter " + name);
  }
  if (!diff.str().empty()) throw ConfigError("checkpoint parameters do not match model layout:\n" + diff.str());

  for (size_t i = 0; i < params.size(); ++i) {
    const int64_t offset = entries[i].at("offset").get<int64_t>();
    Var v = params[i].var;
    Tensor& t = v.mutable_value();
    if (offset < 0 || static_cast<uint64_t>(offset + t.size()) * 4 > blob.size()) {
      throw DataError("checkpoint blob is truncated at parameter " + params[i].name);
    }
    for (int64_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(get_f32(bytes + 4 * (offset + k)));
  }
  const int64_t elements = m.value("elements", int64_t{-1});
  if (elements >= 0 && static_cast<uint64_t>(elements) * 4 != blob.size()) {
    throw DataError("checkpoint blob size does not match manifest");
  }
  return out;
}

}  // namespace msf
