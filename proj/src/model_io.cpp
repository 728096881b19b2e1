#include "cbp/model_io.hpp"

#include <fstream>

#include "cbp/binary_io.hpp"
#include "cbp/error.hpp"

namespace cbp {

using nlohmann::json;
namespace fs = std::filesystem;

json architecture_to_json(const Architecture& layers) {
  json arr = json::array();
  for (const auto& layer : layers) {
    json j{{"kind", to_string(layer.kind)},
           {"name", layer.name},
           {"input_dim", layer.input_dim},
           {"output_dim", layer.output_dim}};
    if (layer.kind == LayerKind::FrozenPrefix) {
      j["declared_params"] = layer.declared_params;
      j["declared_macs"] = layer.declared_macs;
    }
    if (layer.kind == LayerKind::Dense) j["analyzed"] = layer.analyzed;
    arr.push_back(std::move(j));
  }
  return arr;
}

Architecture architecture_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::MalformedModel, "manifest 'layers' must be an array");
  Architecture layers;
  for (const auto& item : j) {
    try {
      LayerSpec layer;
      layer.kind = layer_kind_from_string(item.at("kind").get<std::string>());
      layer.name = item.at("name").get<std::string>();
      layer.input_dim = item.at("input_dim").get<std::size_t>();
      layer.output_dim = item.at("output_dim").get<std::size_t>();
      layer.declared_params = item.value("declared_params", std::uint64_t{0});
      layer.declared_macs = item.value("declared_macs", std::uint64_t{0});
      layer.analyzed = item.value("analyzed", false);
      layers.push_back(std::move(layer));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedModel, "layer " + std::to_string(layers.size()) + ": " + e.what());
    }
  }
  validate_architecture(layers);
  return layers;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Validation, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

Architecture load_architecture(const fs::path& manifest_path) {
  const json j = read_json_file(manifest_path);
  if (!j.contains("layers")) throw Error(ErrorKind::MalformedModel, manifest_path.string() + ": missing 'layers'");
  return architecture_from_json(j.at("layers"));
}

std::vector<std::string> load_class_names(const fs::path& manifest_path) {
  const json j = read_json_file(manifest_path);
  return j.at("class_names").get<std::vector<std::string>>();
}

std::uint64_t weight_value_count(const Architecture& layers) {
  std::uint64_t n = 0;
  for (const auto& layer : layers) {
    if (layer.kind != LayerKind::FrozenPrefix) n += layer_param_count(layer);
  }
  return n;
}

std::vector<DenseParams> decode_weights(const Architecture& layers, std::span<const float> blob) {
  std::vector<DenseParams> params(layers.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    if (layer.kind == LayerKind::FrozenPrefix) continue;
    const std::size_t nw = layer.output_dim * layer.input_dim;
    const std::size_t need = nw + layer.output_dim;
    if (blob.size() - offset < need) {
      throw Error(ErrorKind::MalformedModel,
                  "layer '" + layer.name + "': weights blob ends early (needs " + std::to_string(need) +
                      " values, " + std::to_string(blob.size() - offset) + " remain)");
    }
    params[i].weight.assign(blob.begin() + offset, blob.begin() + offset + nw);
    offset += nw;
    params[i].bias.assign(blob.begin() + offset, blob.begin() + offset + layer.output_dim);
    offset += layer.output_dim;
  }
  if (offset != blob.size()) {
    throw Error(ErrorKind::MalformedModel, "weights blob has " + std::to_string(blob.size() - offset) +
                                               " trailing values after layer '" + layers.back().name + "'");
  }
  return params;
}

std::vector<float> encode_weights(const Network& net) {
  std::vector<float> blob;
  blob.reserve(weight_value_count(net.layers()));
  for (const auto& p : net.all_params()) {
    blob.insert(blob.end(), p.weight.begin(), p.weight.end());
    blob.insert(blob.end(), p.bias.begin(), p.bias.end());
  }
  return blob;
}

Network load_network(const fs::path& manifest_path, const fs::path& weights_path) {
  const json j = read_json_file(manifest_path);
  Architecture layers;
  std::vector<std::string> class_names;
  fs::path blob_path = weights_path;
  try {
    layers = architecture_from_json(j.at("layers"));
    class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.value("activation", std::string("relu")) != "relu") {
      throw Error(ErrorKind::MalformedModel, "only the 'relu' activation is supported");
    }
    if (blob_path.empty()) blob_path = manifest_path.parent_path() / j.at("weights").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedModel, manifest_path.string() + ": " + e.what());
  }
  if (!fs::exists(blob_path)) throw Error(ErrorKind::Io, "weights file not found: " + blob_path.string());
  const std::vector<float> blob = read_f32_file(blob_path);
  auto params = decode_weights(layers, blob);
  return Network(std::move(layers), std::move(params), std::move(class_names));
}

void save_network(const Network& net, const fs::path& manifest_path, const fs::path& weights_path) {
  std::string ref = weights_path.string();
  if (fs::absolute(weights_path).parent_path() == fs::absolute(manifest_path).parent_path()) {
    ref = weights_path.filename().string();
  }
  const json j{{"layers", architecture_to_json(net.layers())},
               {"activation", "relu"},
               {"class_names", net.class_names()},
               {"weights", ref}};
  write_json_file(manifest_path, j);
  std::ofstream out(weights_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + weights_path.string() + " for writing");
  for (const auto& p : net.all_params()) {
    write_f32_le(out, p.weight);
    write_f32_le(out, p.bias);
  }
}

}  // namespace cbp
