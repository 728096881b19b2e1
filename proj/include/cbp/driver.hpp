#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbp/dataset.hpp"
#include "cbp/identifier.hpp"
#include "cbp/metrics.hpp"
#include "cbp/model.hpp"

namespace cbp {

enum class StopReason { NoProgress, MaxIterations, TargetSize, MinAccuracy, WouldEmptyLayer, IdentificationInputEmpty };

const char* to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view text);

struct StoppingCriteria {
  int max_iterations = 100;
  std::optional<std::uint64_t> target_params;  // stop once params <= target
  std::optional<double> min_accuracy;          // stop once accuracy <= this, in [0, 1]
  bool stop_on_no_progress = true;
};

enum class Aggregation { Micro, Macro };

struct CbpConfig {
  std::vector<std::string> analyzed_layers;  // empty: layers flagged `analyzed` in the manifest
  bool include_misclassified = false;
  IdentifierMode mode = IdentifierMode::Fga;
  AggregationPolicy policy;
  TreeHyperparams tree;
  bool keep_absent_rules = true;
  StoppingCriteria stopping;
  int latency_runs = 100;  // 0 disables latency measurement
  Aggregation aggregation = Aggregation::Micro;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints

  /// Throws Error(Config).
  void validate() const;
  IdentifierConfig identifier_config(const std::vector<std::string>& layers) const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults. Throws Error(Config).
  static CbpConfig from_json(const nlohmann::json& j);
  /// Covers every field that influences the trajectory (not checkpoint_dir).
  std::uint64_t hash() const;
};

struct IterationReport {
  MetricsRow metrics;
  std::map<std::string, std::size_t> removed;
  std::size_t identification_samples = 0;
  std::size_t rules_extracted = 0;
  std::size_t rules_retained = 0;
  std::optional<StopReason> stop_reason;
  std::uint64_t network_fingerprint = 0;

  int iteration() const noexcept { return metrics.iteration; }
  std::size_t total_removed() const;
};

nlohmann::json report_to_json(const IterationReport& report, bool include_timing = true);
IterationReport report_from_json(const nlohmann::json& j);

struct RunResult {
  IterationReport baseline;             // iteration 0, the input network
  std::vector<IterationReport> reports;  // iterations 1.. produced by this call
  Network final_network;
};

struct RunHooks {
  /// Called after each iteration is checkpointed; returning false halts the
  /// run without a stop reason (an interruption that resume() can pick up).
  std::function<bool(const IterationReport&)> on_iteration;
};

/// Iterative loop: capture -> filter -> identify -> prune -> measure -> checkpoint,
/// until a stopping criterion fires.
RunResult run(const Network& net, const DatasetSplit& data, const CbpConfig& config, const RunHooks& hooks = {});

/// Continues the run stored in config.checkpoint_dir. Throws Error(Config) if the
/// config hash differs from the stored one, Error(FingerprintMismatch) if the last
/// checkpointed network does not match its report. A finished run yields no reports.
RunResult resume(const DatasetSplit& data, const CbpConfig& config, const RunHooks& hooks = {});

/// The metrics row the driver reports for `net` (test split, no phase timings).
MetricsRow evaluate(const Network& net, const DatasetSplit& data, const std::vector<std::string>& analyzed,
                    Aggregation aggregation, int latency_runs, int iteration = 0);

/// Run log: metrics columns followed by removed_<layer>... and stop_reason.
std::vector<std::string> run_log_header(const std::vector<std::string>& analyzed);
std::vector<std::string> run_log_fields(const IterationReport& report);
void write_run_log(const std::filesystem::path& path, const std::vector<std::string>& analyzed,
                   const std::vector<IterationReport>& rows);

std::filesystem::path iteration_dir(const std::filesystem::path& checkpoint_dir, int iteration);

}  // namespace cbp
