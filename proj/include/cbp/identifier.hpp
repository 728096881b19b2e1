#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbp/decision_tree.hpp"
#include "cbp/inference.hpp"
#include "cbp/model.hpp"

namespace cbp {

enum class Comparator { LessEqual, Greater };

struct Condition {
  std::size_t neuron = 0;
  Comparator cmp = Comparator::LessEqual;
  double threshold = 0.0;

  bool holds(float activation) const {
    const double v = activation;
    return cmp == Comparator::LessEqual ? v <= threshold : v > threshold;
  }
  bool operator==(const Condition&) const = default;
};

/// pre -> post, where pre is a conjunction of neuron activation conditions
/// read off the root-to-leaf path of a pure leaf.
struct DecisionRule {
  std::string concept_name;
  std::string layer;
  std::vector<Condition> conditions;
  Verdict post = Verdict::Present;
  std::size_t present = 0;  // a
  std::size_t absent = 0;   // b
  double training_recall = 0.0;

  bool matches(std::span<const float> activations) const;
  bool pure() const noexcept {
    return (post == Verdict::Present && absent == 0) || (post == Verdict::Absent && present == 0);
  }
  bool operator==(const DecisionRule&) const = default;
};

/// One rule per pure leaf (present- and absent-verdict alike), in left-to-right leaf order.
/// Recall of a present rule is a / total_present; of an absent rule, b / total_absent.
std::vector<DecisionRule> extract_rules(const DecisionTree& tree, std::size_t total_present,
                                        std::size_t total_absent);
/// Denominators taken from the activations the tree was induced on.
std::vector<DecisionRule> extract_rules(const DecisionTree& tree, const ActivationDataset& acts);

/// Rule selection per (concept, layer) group.
struct AggregationPolicy {
  enum class Kind { AllRules, Top, Rec, Avg };

  Kind kind = Kind::AllRules;
  int top_n = 0;         // Top
  double rec_percent = 0;  // Rec, in (0, 100]

  static AggregationPolicy all() { return {}; }
  static AggregationPolicy top(int n) { return {Kind::Top, n, 0}; }
  static AggregationPolicy rec(double percent) { return {Kind::Rec, 0, percent}; }
  static AggregationPolicy avg() { return {Kind::Avg, 0, 0}; }

  /// Parses "all", "top:N", "rec:X", "avg". Throws Error(Config).
  static AggregationPolicy parse(std::string_view text);
  std::string to_string() const;
  /// Throws Error(Config) for N <= 0 or X outside (0, 100].
  void validate() const;

  bool operator==(const AggregationPolicy&) const = default;
};

/// Applies the policy within each (concept, layer) group. Groups keep their
/// order of first appearance; retained rules are listed by descending recall
/// (stable with respect to extraction order).
std::vector<DecisionRule> aggregate(std::span<const DecisionRule> rules, const AggregationPolicy& policy);

/// Per-layer union of the neurons named in rule conditions.
struct KeepSet {
  std::map<std::string, std::set<std::size_t>> layers;

  const std::set<std::size_t>& neurons(const std::string& layer) const;
  std::size_t total() const;
  bool subset_of(const KeepSet& other) const;
  bool operator==(const KeepSet&) const = default;
};

/// Throws Error(Validation) if a rule names an unknown layer or an out-of-range neuron.
KeepSet keep_set(std::span<const DecisionRule> rules, const Network& net);

enum class IdentifierMode { Fga, Efga };

struct IdentifierConfig {
  IdentifierMode mode = IdentifierMode::Fga;
  AggregationPolicy policy;  // ignored in Fga mode (always all rules)
  TreeHyperparams tree;
  bool keep_absent_rules = true;
  std::vector<std::string> layers;

  AggregationPolicy effective_policy() const {
    return mode == IdentifierMode::Fga ? AggregationPolicy::all() : policy;
  }
};

struct Identification {
  std::vector<DecisionTree> trees;
  std::vector<DecisionRule> rules;     // every pure-leaf rule
  std::vector<DecisionRule> retained;  // after aggregation (and the absent-rule filter)
  KeepSet keep;
};

/// Neurons identifier: one tree per (concept, layer), rule extraction, aggregation, keep set.
Identification identify(const ActivationDataset& acts, const Network& net, const IdentifierConfig& config);

/// Rule dump: JSON lines {concept, layer, conditions:[{neuron, cmp, thr}], post, a, b, recall}.
std::string rule_to_json_line(const DecisionRule& rule);
DecisionRule rule_from_json_line(std::string_view line);
void write_rules_jsonl(const std::filesystem::path& path, std::span<const DecisionRule> rules);
std::vector<DecisionRule> read_rules_jsonl(const std::filesystem::path& path);

}  // namespace cbp
