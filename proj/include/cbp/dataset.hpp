#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cbp {

enum class ConceptKind { Class, Feature };

struct Concept {
  std::string name;
  ConceptKind kind = ConceptKind::Feature;

  bool operator==(const Concept&) const = default;
};

/// Concepts of interest plus the class vocabulary they refer to.
struct ConceptCatalog {
  std::size_t feature_dim = 0;
  std::vector<std::string> classes;
  std::vector<Concept> concepts;

  void validate() const;
  /// Every Class concept must name one of `class_names`.
  void validate_against(std::span<const std::string> class_names) const;

  std::optional<std::size_t> concept_index(std::string_view name) const;
  std::optional<std::size_t> class_index(std::string_view name) const;
  /// Catalog index of the Class concept for class `class_idx`, if the catalog has one.
  std::optional<std::size_t> class_concept_index(std::size_t class_idx) const;
  std::vector<std::size_t> class_concept_indices() const;

  bool operator==(const ConceptCatalog&) const = default;
};

struct LabeledSample {
  std::string id;
  std::vector<float> features;
  std::size_t true_class = 0;                // index into catalog.classes
  std::vector<std::uint8_t> concept_flags;   // one 0/1 entry per catalog concept

  bool operator==(const LabeledSample&) const = default;
};

struct DatasetSplit {
  ConceptCatalog catalog;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;

  /// Checks sample invariants and train/test id disjointness.
  void validate() const;

  bool operator==(const DatasetSplit&) const = default;
};

/// Conventional file names inside a dataset directory.
struct DatasetFiles {
  std::filesystem::path features;  // features.bin
  std::filesystem::path labels;    // labels.csv
  std::filesystem::path catalog;   // catalog.json

  static DatasetFiles in(const std::filesystem::path& dir);
};

ConceptCatalog load_catalog(const std::filesystem::path& path);
void save_catalog(const ConceptCatalog& catalog, const std::filesystem::path& path);

/// Labels CSV header: id,split,true_class,<one 0/1 column per concept>.
DatasetSplit load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& labels_path,
                          const ConceptCatalog& catalog);
DatasetSplit load_dataset(const DatasetFiles& files);

/// Writes train rows first, then test rows.
void save_dataset(const DatasetSplit& split, const DatasetFiles& files);

struct SyntheticSpec {
  std::size_t num_classes = 2;
  std::size_t num_features = 1;
  double test_fraction = 0.2;
  double class_separation = 4.0;
  double feature_strength = 2.5;
  double noise = 1.0;
};

/// Gaussian clusters per (class, feature-flag combination). Deterministic in `seed`
/// on every platform (own normal sampler over mt19937_64).
DatasetSplit generate_synthetic(std::uint64_t seed, std::size_t n, std::size_t feature_dim,
                                const SyntheticSpec& spec = {});

}  // namespace cbp
