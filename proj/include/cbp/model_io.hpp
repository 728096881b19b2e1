#pragma once

#include <filesystem>

#include <json.hpp>

#include "cbp/model.hpp"

namespace cbp {

// Manifest: UTF-8 JSON
//   {"layers": [{"kind", "name", "input_dim", "output_dim",
//                "declared_params"?, "declared_macs"?, "analyzed"?}],
//    "activation": "relu", "class_names": [...], "weights": "<blob path>"}
// Weights: one f32 little-endian blob, layers in manifest order,
// row-major weight matrix followed by the bias vector for each Dense/Output layer.

nlohmann::json architecture_to_json(const Architecture& layers);
Architecture architecture_from_json(const nlohmann::json& j);

/// Reads only the layer inventory; no weights needed for accounting.
Architecture load_architecture(const std::filesystem::path& manifest_path);
std::vector<std::string> load_class_names(const std::filesystem::path& manifest_path);

/// Empty `weights_path` resolves the manifest's "weights" entry relative to the manifest.
Network load_network(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path = {});

/// Writes both files; the manifest references the blob by file name when both share a directory.
void save_network(const Network& net, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& weights_path);

/// Decodes a weight blob against an architecture.
std::vector<DenseParams> decode_weights(const Architecture& layers, std::span<const float> blob);
std::vector<float> encode_weights(const Network& net);
std::uint64_t weight_value_count(const Architecture& layers);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cbp
