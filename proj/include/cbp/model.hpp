#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cbp {

enum class LayerKind { FrozenPrefix, Dense, Output };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view text);

/// One entry of the layer inventory.
///
/// A FrozenPrefix stands in for an unexecuted backbone (e.g. a conv stack):
/// only its declared parameter and MAC counts are known. Dense and Output
/// layers are affine maps whose weights live in the owning Network.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::string name;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::uint64_t declared_params = 0;
  std::uint64_t declared_macs = 0;
  bool analyzed = false;

  bool operator==(const LayerSpec&) const = default;
};

using Architecture = std::vector<LayerSpec>;

/// Throws Error(MalformedModel) naming the first offending layer.
void validate_architecture(std::span<const LayerSpec> layers);

std::uint64_t layer_param_count(const LayerSpec& layer);
std::uint64_t layer_mac_count(const LayerSpec& layer);

std::uint64_t param_count(std::span<const LayerSpec> layers);

struct MacCount {
  std::vector<std::uint64_t> per_layer;  // aligned with the layer list
  std::uint64_t total = 0;
};

MacCount mac_count(std::span<const LayerSpec> layers);

/// Pure parameter payload at 32 bits per parameter.
std::uint64_t size_bytes(std::span<const LayerSpec> layers);

/// Decimal megabytes (10^6 bytes).
double bytes_to_mb(std::uint64_t bytes);

std::optional<std::size_t> find_layer(std::span<const LayerSpec> layers, std::string_view name);

/// Weights of a Dense/Output layer. `weight` is output_dim x input_dim, row-major.
struct DenseParams {
  std::vector<float> weight;
  std::vector<float> bias;

  bool operator==(const DenseParams&) const = default;
};

enum class Activation { ReLU };

/// Immutable feed-forward network: optional frozen prefix, dense stack, output layer.
class Network {
 public:
  /// `params` is aligned with `layers`; the FrozenPrefix entry must be empty.
  Network(Architecture layers, std::vector<DenseParams> params,
          std::vector<std::string> class_names, Activation activation = Activation::ReLU);

  /// All weights and biases zero; handy for accounting-only workflows and tests.
  static Network zeros(Architecture layers, std::vector<std::string> class_names);

  const Architecture& layers() const noexcept { return layers_; }
  const LayerSpec& layer(std::size_t index) const { return layers_.at(index); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::optional<std::size_t> find_layer(std::string_view name) const;
  /// Throws Error(Validation) when the name is unknown.
  std::size_t layer_index(std::string_view name) const;

  const DenseParams& params(std::size_t layer_index) const { return params_.at(layer_index); }
  std::span<const DenseParams> all_params() const noexcept { return params_; }

  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  Activation activation() const noexcept { return activation_; }

  /// Index of the first executed (non-prefix) layer.
  std::size_t first_dense_index() const noexcept { return has_prefix() ? 1 : 0; }
  bool has_prefix() const noexcept;
  /// Length of the feature vectors fed to the dense stack.
  std::size_t input_dim() const { return layers_.at(first_dense_index()).input_dim; }

  /// FNV-1a over the canonical architecture description and the raw weight bits.
  std::uint64_t fingerprint() const;

  bool operator==(const Network&) const = default;

 private:
  Architecture layers_;
  std::vector<DenseParams> params_;
  std::vector<std::string> class_names_;
  Activation activation_ = Activation::ReLU;
};

inline std::uint64_t param_count(const Network& net) { return param_count(net.layers()); }
inline MacCount mac_count(const Network& net) { return mac_count(net.layers()); }
inline std::uint64_t size_bytes(const Network& net) { return size_bytes(net.layers()); }

}  // namespace cbp
