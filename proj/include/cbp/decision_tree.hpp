#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbp/inference.hpp"

namespace cbp {

struct TreeHyperparams {
  int max_depth = 10;
  std::size_t min_samples_leaf = 1;

  bool operator==(const TreeHyperparams&) const = default;
};

enum class Verdict { Present, Absent };

const char* to_string(Verdict v);

/// Flat-arena node. Samples with activation <= threshold go left, > threshold go right.
struct TreeNode {
  bool leaf = true;
  std::size_t neuron = 0;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t present = 0;  // a: concept-present samples reaching this node
  std::size_t absent = 0;   // b: concept-absent samples reaching this node
  Verdict verdict = Verdict::Absent;

  bool pure() const noexcept {
    return (verdict == Verdict::Present && absent == 0) || (verdict == Verdict::Absent && present == 0);
  }
};

/// One tree per (concept, layer); nodes[0] is the root.
struct DecisionTree {
  std::string concept_name;
  std::string layer;
  std::vector<TreeNode> nodes;

  const TreeNode& root() const { return nodes.front(); }
  int depth() const;
  std::size_t leaf_count() const;
  /// Index of the leaf reached by an activation row.
  std::size_t leaf_for(std::span<const float> activations) const;
};

/// Exact Gini split quality: sum over children of (present^2 + absent^2) / n_child,
/// stored as a fraction so that comparisons are exact. Larger is better
/// (equivalent to smaller weighted Gini impurity).
struct SplitQuality {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static SplitQuality of(std::size_t left_present, std::size_t left_absent, std::size_t right_present,
                         std::size_t right_absent);
  /// Weighted impurity sum_child n_child * gini_child.
  double weighted_gini(std::size_t n) const;
};

/// true when a is strictly better than b.
bool better(const SplitQuality& a, const SplitQuality& b);
bool same_quality(const SplitQuality& a, const SplitQuality& b);

struct SplitCandidate {
  bool valid = false;
  std::size_t neuron = 0;
  double threshold = 0.0;
  SplitQuality quality;
};

/// Best (neuron, midpoint threshold) split of `rows` for the given present-labels.
/// Ties go to the lowest neuron, then the lowest threshold. Neurons are scanned
/// in parallel; the serial version is the reference implementation.
SplitCandidate find_best_split(const LayerActivations& acts, std::span<const std::size_t> rows,
                               std::span<const std::uint8_t> labels, std::size_t min_samples_leaf);
SplitCandidate find_best_split_serial(const LayerActivations& acts, std::span<const std::size_t> rows,
                                      std::span<const std::uint8_t> labels, std::size_t min_samples_leaf);

/// Greedy CART with Gini impurity over one layer's activations.
/// `labels[s]` is 1 when the concept is present in sample s.
DecisionTree induce_tree(const LayerActivations& acts, std::span<const std::uint8_t> labels,
                         const TreeHyperparams& hp, std::string concept_name = {});

DecisionTree induce_tree(const ActivationDataset& acts, std::size_t concept_idx, const std::string& layer,
                         const TreeHyperparams& hp);

}  // namespace cbp
