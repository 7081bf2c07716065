#include "jelly/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "jelly/errors.hpp"

using nlohmann::json;

namespace jelly {
namespace {

constexpr const char* kFormat = "jelly-checkpoint";
constexpr int kVersion = 1;

json config_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},       {"backbone", to_string(c.backbone)},
          {"hidden_size", c.hidden_size},          {"input_channels", c.input_channels},
          {"input_width", c.input_width},          {"input_height", c.input_height},
          {"tiny_width", c.tiny_width}};
}

ModelConfig config_of(const json& j) {
  ModelConfig c;
  try {
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    c.hidden_size = j.at("hidden_size").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.input_width = j.at("input_width").get<int>();
    c.input_height = j.at("input_height").get<int>();
    c.tiny_width = j.value("tiny_width", 8);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  validate(c);
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig config_from_json(const std::string& text) {
  try {
    return config_of(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

template <typename T>
Checkpoint snapshot(const Classifier<T>& model) {
  Checkpoint cp;
  cp.config = model.config();
  for (const auto& [name, var] : model.params().items()) {
    cp.names.push_back(name);
    cp.tensors.push_back(var->value.template cast<float>());
  }
  for (const auto& [name, state] : model.norm_states()) {
    cp.names.push_back(name + ".running_mean");
    cp.tensors.push_back(state.running_mean.template cast<float>());
    cp.names.push_back(name + ".running_var");
    cp.tensors.push_back(state.running_var.template cast<float>());
  }
  return cp;
}

template <typename T>
void restore(Classifier<T>& model, const Checkpoint& cp) {
  if (!(cp.config == model.config())) throw ConfigError("checkpoint config differs from the model");
  std::size_t k = 0;
  const auto take = [&](const std::string& expected, Tensor<T>& dst) {
    if (k >= cp.names.size() || cp.names[k] != expected) {
      throw ConfigError("checkpoint is missing tensor " + expected);
    }
    if (cp.tensors[k].shape() != dst.shape()) {
      throw ShapeError("checkpoint tensor " + expected + " has shape " + shape_str(cp.tensors[k].shape()));
    }
    dst = cp.tensors[k].template cast<T>();
    ++k;
  };
  for (auto& [name, var] : model.params().items()) take(name, var->value);
  for (auto& [name, state] : model.norm_states()) {
    take(name + ".running_mean", state.running_mean);
    take(name + ".running_var", state.running_var);
  }
  if (k != cp.names.size()) throw ConfigError("checkpoint has unexpected extra tensors");
}

Classifier<float> instantiate(const Checkpoint& checkpoint) {
  Classifier<float> model(checkpoint.config, 0);
  restore(model, checkpoint);
  return model;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& cp) {
  json tensors = json::array();
  for (std::size_t i = 0; i < cp.names.size(); ++i) {
    tensors.push_back({{"name", cp.names[i]}, {"shape", cp.tensors[i].shape()}});
  }
  const json header = {{"format", kFormat},
                       {"version", kVersion},
                       {"precision", "float32"},
                       {"byte_order", "little"},
                       {"model", config_json(cp.config)},
                       {"tensors", tensors}};
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << header.dump() << '\n';
  for (const auto& t : cp.tensors) {
    for (float v : t.values()) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw Error("cannot write " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DecodeError(file.string() + ": cannot open checkpoint");
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DecodeError(file.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion) {
    throw DecodeError(file.string() + ": not a version-1 checkpoint");
  }
  if (header.value("precision", "") != "float32") throw DecodeError(file.string() + ": unsupported precision");
  Checkpoint cp;
  cp.config = config_of(header.at("model"));
  for (const auto& t : header.at("tensors")) {
    cp.names.push_back(t.at("name").get<std::string>());
    Tensor<float> tensor(t.at("shape").get<std::vector<int>>());
    for (auto& v : tensor.values()) {
      std::uint32_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
        throw DecodeError(file.string() + ": truncated tensor " + cp.names.back());
      }
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      v = std::bit_cast<float>(bits);
    }
    cp.tensors.push_back(std::move(tensor));
  }
  return cp;
}

template Checkpoint snapshot(const Classifier<float>&);
template Checkpoint snapshot(const Classifier<double>&);
template void restore(Classifier<float>&, const Checkpoint&);
template void restore(Classifier<double>&, const Checkpoint&);

}  // namespace jelly
