#include "cbp/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cbp/binary_io.hpp"
#include "cbp/error.hpp"
#include "cbp/model_io.hpp"

namespace cbp {

using nlohmann::json;
namespace fs = std::filesystem;

void ConceptCatalog::validate() const {
  if (feature_dim == 0) throw Error(ErrorKind::Validation, "catalog: feature_dim must be positive");
  if (classes.empty()) throw Error(ErrorKind::Validation, "catalog: no classes");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (!seen.insert(c).second) throw Error(ErrorKind::Validation, "catalog: duplicate class '" + c + "'");
  }
  seen.clear();
  for (const auto& c : concepts) {
    if (c.name.empty()) throw Error(ErrorKind::Validation, "catalog: empty concept name");
    if (!seen.insert(c.name).second) throw Error(ErrorKind::Validation, "catalog: duplicate concept '" + c.name + "'");
    if (c.kind == ConceptKind::Class && !class_index(c.name)) {
      throw Error(ErrorKind::Validation, "catalog: class concept '" + c.name + "' is not a class");
    }
  }
}

void ConceptCatalog::validate_against(std::span<const std::string> class_names) const {
  if (!std::equal(classes.begin(), classes.end(), class_names.begin(), class_names.end())) {
    throw Error(ErrorKind::Validation, "catalog classes do not match the network's class names");
  }
  for (const auto& c : concepts) {
    if (c.kind == ConceptKind::Class &&
        std::find(class_names.begin(), class_names.end(), c.name) == class_names.end()) {
      throw Error(ErrorKind::Validation, "class concept '" + c.name + "' is not a network class");
    }
  }
}

std::optional<std::size_t> ConceptCatalog::concept_index(std::string_view name) const {
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> ConceptCatalog::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> ConceptCatalog::class_concept_index(std::size_t class_idx) const {
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].kind == ConceptKind::Class && concepts[i].name == classes.at(class_idx)) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> ConceptCatalog::class_concept_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].kind == ConceptKind::Class) out.push_back(i);
  }
  return out;
}

namespace {

void validate_sample(const LabeledSample& s, const ConceptCatalog& catalog, const std::string& where) {
  if (s.id.empty() || s.id.find_first_of(",\n\r") != std::string::npos) {
    throw Error(ErrorKind::Validation, where + ": invalid sample id '" + s.id + "'");
  }
  if (s.features.size() != catalog.feature_dim) {
    throw Error(ErrorKind::DimensionMismatch, where + ": expected " + std::to_string(catalog.feature_dim) +
                                                  " features, got " + std::to_string(s.features.size()));
  }
  for (std::size_t k = 0; k < s.features.size(); ++k) {
    if (!std::isfinite(s.features[k])) {
      throw Error(ErrorKind::Validation, where + ": non-finite feature at index " + std::to_string(k));
    }
  }
  if (s.true_class >= catalog.classes.size()) throw Error(ErrorKind::Validation, where + ": class out of range");
  if (s.concept_flags.size() != catalog.concepts.size()) {
    throw Error(ErrorKind::Validation, where + ": concept flag count mismatch");
  }
  for (std::size_t c = 0; c < catalog.concepts.size(); ++c) {
    const std::uint8_t flag = s.concept_flags[c];
    if (flag > 1) throw Error(ErrorKind::Validation, where + ": concept flags must be 0 or 1");
    if (catalog.concepts[c].kind == ConceptKind::Class) {
      const bool expected = catalog.classes[s.true_class] == catalog.concepts[c].name;
      if (static_cast<bool>(flag) != expected) {
        throw Error(ErrorKind::Validation,
                    where + ": class concept '" + catalog.concepts[c].name + "' disagrees with true_class");
      }
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void DatasetSplit::validate() const {
  catalog.validate();
  std::set<std::string> ids;
  for (const auto* part : {&train, &test}) {
    for (const auto& s : *part) {
      validate_sample(s, catalog, "sample '" + s.id + "'");
      if (!ids.insert(s.id).second) throw Error(ErrorKind::Validation, "duplicate sample id '" + s.id + "'");
    }
  }
}

DatasetFiles DatasetFiles::in(const fs::path& dir) {
  return {dir / "features.bin", dir / "labels.csv", dir / "catalog.json"};
}

ConceptCatalog load_catalog(const fs::path& path) {
  const json j = read_json_file(path);
  ConceptCatalog catalog;
  try {
    catalog.feature_dim = j.at("feature_dim").get<std::size_t>();
    catalog.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& c : j.at("concepts")) {
      const std::string kind = c.at("kind").get<std::string>();
      if (kind != "class" && kind != "feature") {
        throw Error(ErrorKind::Validation, path.string() + ": unknown concept kind '" + kind + "'");
      }
      catalog.concepts.push_back({c.at("name").get<std::string>(),
                                  kind == "class" ? ConceptKind::Class : ConceptKind::Feature});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, path.string() + ": " + e.what());
  }
  catalog.validate();
  return catalog;
}

void save_catalog(const ConceptCatalog& catalog, const fs::path& path) {
  json concepts = json::array();
  for (const auto& c : catalog.concepts) {
    concepts.push_back({{"name", c.name}, {"kind", c.kind == ConceptKind::Class ? "class" : "feature"}});
  }
  write_json_file(path, {{"feature_dim", catalog.feature_dim}, {"classes", catalog.classes}, {"concepts", concepts}});
}

DatasetSplit load_dataset(const fs::path& features_path, const fs::path& labels_path,
                          const ConceptCatalog& catalog) {
  catalog.validate();
  std::ifstream in(labels_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + labels_path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Validation, labels_path.string() + ": empty labels file");
  const auto header = split_csv_line(strip_cr(line));
  if (header.size() != 3 + catalog.concepts.size() || header[0] != "id" || header[1] != "split" ||
      header[2] != "true_class") {
    throw Error(ErrorKind::Validation, labels_path.string() + ": header must be id,split,true_class,<concepts>");
  }
  for (std::size_t c = 0; c < catalog.concepts.size(); ++c) {
    if (header[3 + c] != catalog.concepts[c].name) {
      throw Error(ErrorKind::Validation, labels_path.string() + ": column '" + header[3 + c] +
                                             "' does not match catalog concept '" + catalog.concepts[c].name + "'");
    }
  }

  struct Row {
    LabeledSample sample;
    bool is_test;
  };
  std::vector<Row> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = labels_path.filename().string() + " row " + std::to_string(row_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::Validation, where + ": expected " + std::to_string(header.size()) + " fields");
    }
    Row row;
    row.sample.id = fields[0];
    if (fields[1] == "train") {
      row.is_test = false;
    } else if (fields[1] == "test") {
      row.is_test = true;
    } else {
      throw Error(ErrorKind::Validation, where + ": split must be 'train' or 'test'");
    }
    const auto cls = catalog.class_index(fields[2]);
    if (!cls) throw Error(ErrorKind::Validation, where + ": unknown class label '" + fields[2] + "'");
    row.sample.true_class = *cls;
    for (std::size_t c = 0; c < catalog.concepts.size(); ++c) {
      const auto& f = fields[3 + c];
      if (f != "0" && f != "1") throw Error(ErrorKind::Validation, where + ": concept flags must be 0 or 1");
      row.sample.concept_flags.push_back(f == "1" ? 1 : 0);
    }
    rows.push_back(std::move(row));
  }

  const std::vector<float> blob = read_f32_file(features_path);
  if (blob.size() != rows.size() * catalog.feature_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                features_path.string() + ": holds " + std::to_string(blob.size()) + " values, expected " +
                    std::to_string(rows.size()) + " samples x " + std::to_string(catalog.feature_dim));
  }

  DatasetSplit split;
  split.catalog = catalog;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& s = rows[i].sample;
    s.features.assign(blob.begin() + i * catalog.feature_dim, blob.begin() + (i + 1) * catalog.feature_dim);
    validate_sample(s, catalog, labels_path.filename().string() + " row " + std::to_string(i + 2));
    (rows[i].is_test ? split.test : split.train).push_back(std::move(s));
  }
  split.validate();
  return split;
}

DatasetSplit load_dataset(const DatasetFiles& files) {
  return load_dataset(files.features, files.labels, load_catalog(files.catalog));
}

void save_dataset(const DatasetSplit& split, const DatasetFiles& files) {
  split.validate();
  save_catalog(split.catalog, files.catalog);
  std::ofstream labels(files.labels, std::ios::trunc);
  if (!labels) throw Error(ErrorKind::Io, "cannot open " + files.labels.string() + " for writing");
  labels << "id,split,true_class";
  for (const auto& c : split.catalog.concepts) labels << ',' << c.name;
  labels << '\n';
  std::ofstream features(files.features, std::ios::binary | std::ios::trunc);
  if (!features) throw Error(ErrorKind::Io, "cannot open " + files.features.string() + " for writing");
  for (const auto& [part, name] : {std::pair{&split.train, "train"}, std::pair{&split.test, "test"}}) {
    for (const auto& s : *part) {
      labels << s.id << ',' << name << ',' << split.catalog.classes[s.true_class];
      for (auto f : s.concept_flags) labels << ',' << static_cast<int>(f);
      labels << '\n';
      write_f32_le(features, s.features);
    }
  }
  if (!labels) throw Error(ErrorKind::Io, "failed writing " + files.labels.string());
}

namespace {

// std::normal_distribution is implementation-defined; this one is not.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::vector<double> random_direction(PortableRng& rng, std::size_t dim, double length) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  const double scale = length / std::sqrt(norm);
  for (auto& x : v) x *= scale;
  return v;
}

}  // namespace

DatasetSplit generate_synthetic(std::uint64_t seed, std::size_t n, std::size_t feature_dim,
                                const SyntheticSpec& spec) {
  if (n < 10) throw Error(ErrorKind::Config, "generate: n must be at least 10");
  if (feature_dim == 0) throw Error(ErrorKind::Config, "generate: feature dimension must be positive");
  if (spec.num_classes < 2) throw Error(ErrorKind::Config, "generate: need at least 2 classes");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) ||
      std::floor(static_cast<double>(n) * spec.test_fraction) < 1.0 ||
      std::floor(static_cast<double>(n) * spec.test_fraction) >= static_cast<double>(n)) {
    throw Error(ErrorKind::Config, "generate: test fraction leaves an empty split");
  }

  PortableRng rng(seed);
  DatasetSplit split;
  auto& cat = split.catalog;
  cat.feature_dim = feature_dim;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    cat.classes.push_back("class_" + std::to_string(c));
    cat.concepts.push_back({cat.classes.back(), ConceptKind::Class});
  }
  for (std::size_t f = 0; f < spec.num_features; ++f) {
    cat.concepts.push_back({"feature_" + std::to_string(f), ConceptKind::Feature});
  }

  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    centers.push_back(random_direction(rng, feature_dim, spec.class_separation));
  }
  std::vector<std::vector<double>> feature_dirs;
  for (std::size_t f = 0; f < spec.num_features; ++f) {
    feature_dirs.push_back(random_direction(rng, feature_dim, spec.feature_strength));
  }

  char id[32];
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample s;
    std::snprintf(id, sizeof id, "s%06zu", i);
    s.id = id;
    s.true_class = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(spec.num_classes)),
                            spec.num_classes - 1);
    std::vector<double> x = centers[s.true_class];
    s.concept_flags.assign(cat.concepts.size(), 0);
    s.concept_flags[s.true_class] = 1;
    for (std::size_t f = 0; f < spec.num_features; ++f) {
      const bool present = rng.uniform() < 0.5;
      s.concept_flags[spec.num_classes + f] = present ? 1 : 0;
      if (present) {
        for (std::size_t k = 0; k < feature_dim; ++k) x[k] += feature_dirs[f][k];
      }
    }
    s.features.resize(feature_dim);
    for (std::size_t k = 0; k < feature_dim; ++k) {
      s.features[k] = static_cast<float>(x[k] + spec.noise * rng.normal());
    }
    // Every k-th sample (k = 1/test_fraction, spread evenly) goes to the test split.
    const bool is_test = std::floor(static_cast<double>(i + 1) * spec.test_fraction) >
                         std::floor(static_cast<double>(i) * spec.test_fraction);
    (is_test ? split.test : split.train).push_back(std::move(s));
  }
  split.validate();
  return split;
}

}  // namespace cbp
