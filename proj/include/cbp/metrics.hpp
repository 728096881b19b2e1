#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cbp/inference.hpp"
#include "cbp/model.hpp"

namespace cbp {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Prediction {
  std::string id;
  std::size_t predicted_class = 0;
};

/// Per-concept counts for class concepts: for concept c a sample is TP when
/// predicted == c == truth, FP when predicted == c != truth, FN when
/// truth == c != predicted, TN otherwise. Result is aligned with `scope`.
std::vector<ConfusionCounts> per_concept_confusion(std::span<const std::size_t> predicted,
                                                   std::span<const std::size_t> truth,
                                                   std::span<const std::size_t> scope);

/// Micro-aggregated (pooled) counts over `scope` class indices.
ConfusionCounts confusion(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::span<const std::size_t> scope);

/// Predictions and labels are matched positionally; ids must agree.
ConfusionCounts confusion(std::span<const Prediction> predictions, std::span<const LabeledSample> labels,
                          std::span<const std::size_t> scope);

ConfusionCounts confusion(const ActivationDataset& acts, std::span<const std::size_t> scope);

/// Undefined ratios (zero denominators) stay empty rather than reading as 0.
struct EffectivenessReport {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  bool operator==(const EffectivenessReport&) const = default;
};

EffectivenessReport effectiveness(const ConfusionCounts& counts);
/// Mean of each defined per-concept metric.
EffectivenessReport macro_effectiveness(std::span<const ConfusionCounts> per_concept);

struct LatencyReport {
  double mean_ms = 0;
  double std_ms = 0;
  double fps = 0;
};

/// Mean, sample standard deviation, fps = 1000 / mean_ms.
LatencyReport latency_from_samples(std::span<const double> samples_ms);

/// One untimed warm-up, then `runs` timed single-threaded forward passes.
LatencyReport benchmark_latency(const Network& net, std::span<const float> sample, int runs);

struct SizeReport {
  std::vector<std::pair<std::string, std::size_t>> neurons;     // analyzed layers
  std::uint64_t params = 0;
  double size_mb = 0;
  std::vector<std::pair<std::string, std::uint64_t>> macs;      // analyzed layers
  std::uint64_t total_macs = 0;
};

SizeReport size_report(std::span<const LayerSpec> layers, std::span<const std::string> analyzed);

/// One row of the iteration tables.
struct MetricsRow {
  int iteration = 0;
  SizeReport size;
  EffectivenessReport effectiveness;
  std::optional<LatencyReport> latency;
  std::optional<double> t_identifier_s;
  std::optional<double> t_pruner_s;
  std::optional<double> t_total_s;
};

/// iteration, <layer>..., params_m, size_mb, accuracy, precision, recall, f1,
/// macs_<layer>_m..., total_macs_g, latency_ms, latency_std_ms, fps,
/// t_identifier_s, t_pruner_s, t_total_s
std::vector<std::string> metrics_header(std::span<const std::string> analyzed);
std::vector<std::string> metrics_fields(const MetricsRow& row);
/// Column names holding wall-clock measurements.
bool is_timing_column(const std::string& name);

/// Rendering for absent values.
inline constexpr const char* kAbsent = "—";

std::string format_fixed(double value, int decimals);
std::string format_optional(const std::optional<double>& value, int decimals);
std::string join_csv(std::span<const std::string> fields);
std::vector<std::string> split_csv(const std::string& line);

}  // namespace cbp
