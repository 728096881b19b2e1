#include "cbp/model.hpp"

#include <cmath>
#include <set>

#include "cbp/binary_io.hpp"
#include "cbp/error.hpp"

namespace cbp {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedModel: return "malformed-model";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::IdentificationInputEmpty: return "identification-input-empty";
    case ErrorKind::WouldEmptyLayer: return "would-empty-layer";
    case ErrorKind::FingerprintMismatch: return "fingerprint-mismatch";
  }
  return "unknown";
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::FrozenPrefix: return "frozen_prefix";
    case LayerKind::Dense: return "dense";
    case LayerKind::Output: return "output";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view text) {
  if (text == "frozen_prefix") return LayerKind::FrozenPrefix;
  if (text == "dense") return LayerKind::Dense;
  if (text == "output") return LayerKind::Output;
  throw Error(ErrorKind::MalformedModel, "unknown layer kind '" + std::string(text) + "'");
}

namespace {

[[noreturn]] void malformed(const LayerSpec& layer, const std::string& what) {
  throw Error(ErrorKind::MalformedModel, "layer '" + layer.name + "': " + what);
}

}  // namespace

void validate_architecture(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw Error(ErrorKind::MalformedModel, "network has no layers");
  std::set<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    if (layer.name.empty()) {
      throw Error(ErrorKind::MalformedModel, "layer " + std::to_string(i) + " has an empty name");
    }
    if (!names.insert(layer.name).second) malformed(layer, "duplicate layer name");
    if (layer.input_dim == 0 || layer.output_dim == 0) malformed(layer, "dimensions must be positive");
    switch (layer.kind) {
      case LayerKind::FrozenPrefix:
        if (i != 0) malformed(layer, "a frozen prefix must be the first layer");
        if (layer.analyzed) malformed(layer, "a frozen prefix cannot be analyzed");
        break;
      case LayerKind::Output:
        if (i + 1 != layers.size()) malformed(layer, "the output layer must be last");
        if (layer.analyzed) malformed(layer, "the output layer cannot be analyzed");
        [[fallthrough]];
      case LayerKind::Dense:
        if (layer.declared_params != 0 || layer.declared_macs != 0) {
          malformed(layer, "declared params/MACs are only allowed on a frozen prefix");
        }
        break;
    }
    if (i > 0 && layers[i - 1].output_dim != layer.input_dim) {
      malformed(layer, "input_dim " + std::to_string(layer.input_dim) + " does not match previous output_dim " +
                           std::to_string(layers[i - 1].output_dim));
    }
  }
  if (layers.back().kind != LayerKind::Output) {
    throw Error(ErrorKind::MalformedModel, "the last layer must be an output layer");
  }
}

std::uint64_t layer_param_count(const LayerSpec& layer) {
  if (layer.kind == LayerKind::FrozenPrefix) return layer.declared_params;
  return static_cast<std::uint64_t>(layer.output_dim) * (static_cast<std::uint64_t>(layer.input_dim) + 1);
}

std::uint64_t layer_mac_count(const LayerSpec& layer) {
  if (layer.kind == LayerKind::FrozenPrefix) return layer.declared_macs;
  return static_cast<std::uint64_t>(layer.output_dim) * static_cast<std::uint64_t>(layer.input_dim);
}

std::uint64_t param_count(std::span<const LayerSpec> layers) {
  std::uint64_t total = 0;
  for (const auto& layer : layers) total += layer_param_count(layer);
  return total;
}

MacCount mac_count(std::span<const LayerSpec> layers) {
  MacCount out;
  out.per_layer.reserve(layers.size());
  for (const auto& layer : layers) {
    out.per_layer.push_back(layer_mac_count(layer));
    out.total += out.per_layer.back();
  }
  return out;
}

std::uint64_t size_bytes(std::span<const LayerSpec> layers) { return 4 * param_count(layers); }

double bytes_to_mb(std::uint64_t bytes) { return static_cast<double>(bytes) / 1e6; }

std::optional<std::size_t> find_layer(std::span<const LayerSpec> layers, std::string_view name) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  return std::nullopt;
}

Network::Network(Architecture layers, std::vector<DenseParams> params, std::vector<std::string> class_names,
                 Activation activation)
    : layers_(std::move(layers)),
      params_(std::move(params)),
      class_names_(std::move(class_names)),
      activation_(activation) {
  validate_architecture(layers_);
  if (params_.size() != layers_.size()) {
    throw Error(ErrorKind::MalformedModel, "expected weights for " + std::to_string(layers_.size()) +
                                               " layers, got " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& layer = layers_[i];
    const DenseParams& p = params_[i];
    if (layer.kind == LayerKind::FrozenPrefix) {
      if (!p.weight.empty() || !p.bias.empty()) malformed(layer, "a frozen prefix carries no weights");
      continue;
    }
    if (p.weight.size() != layer.output_dim * layer.input_dim) {
      malformed(layer, "weight matrix has " + std::to_string(p.weight.size()) + " values, expected " +
                           std::to_string(layer.output_dim * layer.input_dim));
    }
    if (p.bias.size() != layer.output_dim) {
      malformed(layer, "bias has " + std::to_string(p.bias.size()) + " values, expected " +
                           std::to_string(layer.output_dim));
    }
    for (std::size_t k = 0; k < p.weight.size(); ++k) {
      if (!std::isfinite(p.weight[k])) {
        throw Error(ErrorKind::Validation,
                    "layer '" + layer.name + "': non-finite weight at index " + std::to_string(k));
      }
    }
    for (std::size_t k = 0; k < p.bias.size(); ++k) {
      if (!std::isfinite(p.bias[k])) {
        throw Error(ErrorKind::Validation,
                    "layer '" + layer.name + "': non-finite bias at index " + std::to_string(k));
      }
    }
  }
  if (class_names_.size() != layers_.back().output_dim) {
    throw Error(ErrorKind::MalformedModel, "expected " + std::to_string(layers_.back().output_dim) +
                                               " class names, got " + std::to_string(class_names_.size()));
  }
  std::set<std::string> seen;
  for (const auto& name : class_names_) {
    if (!seen.insert(name).second) throw Error(ErrorKind::MalformedModel, "duplicate class name '" + name + "'");
  }
}

Network Network::zeros(Architecture layers, std::vector<std::string> class_names) {
  std::vector<DenseParams> params(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::FrozenPrefix) continue;
    params[i].weight.assign(layers[i].output_dim * layers[i].input_dim, 0.0f);
    params[i].bias.assign(layers[i].output_dim, 0.0f);
  }
  return Network(std::move(layers), std::move(params), std::move(class_names));
}

bool Network::has_prefix() const noexcept {
  return !layers_.empty() && layers_.front().kind == LayerKind::FrozenPrefix;
}

std::optional<std::size_t> Network::find_layer(std::string_view name) const {
  return cbp::find_layer(layers_, name);
}

std::size_t Network::layer_index(std::string_view name) const {
  if (auto idx = find_layer(name)) return *idx;
  throw Error(ErrorKind::Validation, "unknown layer '" + std::string(name) + "'");
}

std::uint64_t Network::fingerprint() const {
  Fnv1a h;
  h.update_u64(layers_.size());
  for (const auto& layer : layers_) {
    h.update(to_string(layer.kind));
    h.update(layer.name);
    h.update_u64(layer.input_dim);
    h.update_u64(layer.output_dim);
    h.update_u64(layer.declared_params);
    h.update_u64(layer.declared_macs);
    h.update_u64(layer.analyzed ? 1 : 0);
  }
  h.update_u64(class_names_.size());
  for (const auto& name : class_names_) h.update(name);
  for (const auto& p : params_) {
    h.update_f32(p.weight);
    h.update_f32(p.bias);
  }
  return h.digest();
}

}  // namespace cbp
