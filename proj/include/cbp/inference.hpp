#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbp/dataset.hpp"
#include "cbp/model.hpp"

namespace cbp {

/// Single-sample forward pass with buffers sized once per network.
/// Hidden activations are post-ReLU; logits carry no activation.
class ForwardPass {
 public:
  explicit ForwardPass(const Network& net);

  std::span<const float> run(std::span<const float> features);
  /// Serial kernels only; used by the latency benchmark and as a reference.
  std::span<const float> run_serial(std::span<const float> features);

  /// Output of layer `layer_index` from the last run (empty for a frozen prefix).
  std::span<const float> activation(std::size_t layer_index) const { return buffers_.at(layer_index); }
  std::span<const float> logits() const { return buffers_.back(); }

 private:
  template <bool Parallel>
  std::span<const float> run_impl(std::span<const float> features);

  const Network* net_;
  std::vector<std::vector<float>> buffers_;
};

struct ForwardResult {
  std::vector<float> logits;
  std::vector<std::vector<float>> activations;  // aligned with net.layers(); empty for prefix/output
};

/// Throws Error(DimensionMismatch) when `features` does not match net.input_dim().
ForwardResult forward(const Network& net, std::span<const float> features);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);

enum class SplitKind { Train, Test };

struct SampleMeta {
  std::string id;
  std::size_t true_class = 0;
  std::size_t predicted_class = 0;
  bool correct = false;
  std::vector<std::uint8_t> concept_flags;

  bool operator==(const SampleMeta&) const = default;
};

/// Activations of one layer for every sample, sample-major.
struct LayerActivations {
  std::string layer;
  std::size_t width = 0;
  std::vector<float> values;

  float at(std::size_t sample, std::size_t neuron) const { return values[sample * width + neuron]; }
  std::span<const float> row(std::size_t sample) const {
    return std::span(values).subspan(sample * width, width);
  }

  bool operator==(const LayerActivations&) const = default;
};

struct ActivationDataset {
  SplitKind source = SplitKind::Train;
  std::uint64_t network_fingerprint = 0;
  std::vector<Concept> concepts;
  std::vector<std::string> class_names;
  std::vector<SampleMeta> samples;
  std::vector<LayerActivations> layers;

  std::size_t size() const noexcept { return samples.size(); }
  /// Throws Error(Validation) for an uncaptured layer.
  const LayerActivations& layer(std::string_view name) const;
  std::optional<std::size_t> concept_index(std::string_view name) const;
  std::vector<std::uint8_t> concept_labels(std::size_t concept_idx) const;
  std::size_t misclassified_count() const;

  bool operator==(const ActivationDataset&) const = default;
};

/// Dense layers to analyze when none are named: those flagged `analyzed` in the manifest.
std::vector<std::string> default_analyzed_layers(const Network& net);

/// One record per sample, in input order. Samples fan out across OpenMP threads.
ActivationDataset capture(const Network& net, std::span<const LabeledSample> samples, SplitKind source,
                          const ConceptCatalog& catalog, std::span<const std::string> layers = {});
/// Single-threaded reference for capture().
ActivationDataset capture_serial(const Network& net, std::span<const LabeledSample> samples, SplitKind source,
                                 const ConceptCatalog& catalog, std::span<const std::string> layers = {});

/// Drops misclassified records unless `include_misclassified`.
/// Throws Error(IdentificationInputEmpty) when nothing is left.
ActivationDataset filter_for_identification(const ActivationDataset& acts, bool include_misclassified);

void save_activation_cache(const ActivationDataset& acts, const std::filesystem::path& path);
/// Throws Error(FingerprintMismatch) if `expected_fingerprint` is given and differs.
ActivationDataset load_activation_cache(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

}  // namespace cbp
