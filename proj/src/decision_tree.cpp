#include "cbp/decision_tree.hpp"

#include <algorithm>
#include <functional>

#include "cbp/error.hpp"

namespace cbp {

const char* to_string(Verdict v) { return v == Verdict::Present ? "present" : "absent"; }

int DecisionTree::depth() const {
  std::function<int(int)> rec = [&](int idx) -> int {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    if (n.leaf) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return nodes.empty() ? 0 : rec(0);
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.leaf; }));
}

std::size_t DecisionTree::leaf_for(std::span<const float> activations) const {
  std::size_t idx = 0;
  while (!nodes[idx].leaf) {
    const TreeNode& n = nodes[idx];
    idx = static_cast<std::size_t>(static_cast<double>(activations[n.neuron]) <= n.threshold ? n.left : n.right);
  }
  return idx;
}

// Sample counts are capped (see induce_tree) so these products fit in 64 bits.
SplitQuality SplitQuality::of(std::size_t lp, std::size_t la, std::size_t rp, std::size_t ra) {
  const std::uint64_t nl = lp + la;
  const std::uint64_t nr = rp + ra;
  SplitQuality q;
  q.num = (static_cast<std::uint64_t>(lp) * lp + static_cast<std::uint64_t>(la) * la) * nr +
          (static_cast<std::uint64_t>(rp) * rp + static_cast<std::uint64_t>(ra) * ra) * nl;
  q.den = nl * nr;
  return q;
}

double SplitQuality::weighted_gini(std::size_t n) const {
  return static_cast<double>(n) - static_cast<double>(num) / static_cast<double>(den);
}

bool better(const SplitQuality& a, const SplitQuality& b) {
  using u128 = unsigned __int128;
  return static_cast<u128>(a.num) * b.den > static_cast<u128>(b.num) * a.den;
}

bool same_quality(const SplitQuality& a, const SplitQuality& b) {
  using u128 = unsigned __int128;
  return static_cast<u128>(a.num) * b.den == static_cast<u128>(b.num) * a.den;
}

namespace {

constexpr std::size_t kMaxSamples = std::size_t{1} << 20;

struct Entry {
  float value;
  std::uint8_t label;
};

// Best split on a single neuron; `buf` is caller-owned scratch.
SplitCandidate best_for_neuron(const LayerActivations& acts, std::size_t neuron, std::span<const std::size_t> rows,
                               std::span<const std::uint8_t> labels, std::size_t min_leaf, std::size_t total_present,
                               std::vector<Entry>& buf) {
  SplitCandidate best;
  buf.resize(rows.size());
  float lo = acts.at(rows[0], neuron);
  float hi = lo;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const float v = acts.at(rows[i], neuron);
    buf[i] = {v, labels[rows[i]]};
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo < hi)) return best;
  std::sort(buf.begin(), buf.end(), [](const Entry& a, const Entry& b) { return a.value < b.value; });

  const std::size_t n = buf.size();
  const std::size_t total_absent = n - total_present;
  std::size_t lp = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    lp += buf[i].label;
    if (!(buf[i].value < buf[i + 1].value)) continue;
    const std::size_t nl = i + 1;
    if (nl < min_leaf || n - nl < min_leaf) continue;
    const std::size_t la = nl - lp;
    const SplitQuality q = SplitQuality::of(lp, la, total_present - lp, total_absent - la);
    if (!best.valid || better(q, best.quality)) {
      best.valid = true;
      best.neuron = neuron;
      best.threshold = (static_cast<double>(buf[i].value) + static_cast<double>(buf[i + 1].value)) / 2.0;
      best.quality = q;
    }
  }
  return best;
}

std::size_t count_present(std::span<const std::size_t> rows, std::span<const std::uint8_t> labels) {
  std::size_t p = 0;
  for (std::size_t r : rows) p += labels[r] ? 1 : 0;
  return p;
}

// Lowest neuron wins ties because candidates arrive in neuron order.
SplitCandidate reduce(std::span<const SplitCandidate> per_neuron) {
  SplitCandidate best;
  for (const auto& c : per_neuron) {
    if (c.valid && (!best.valid || better(c.quality, best.quality))) best = c;
  }
  return best;
}

}  // namespace

SplitCandidate find_best_split_serial(const LayerActivations& acts, std::span<const std::size_t> rows,
                                      std::span<const std::uint8_t> labels, std::size_t min_samples_leaf) {
  if (rows.size() < 2) return {};
  const std::size_t present = count_present(rows, labels);
  std::vector<Entry> buf;
  std::vector<SplitCandidate> per_neuron(acts.width);
  for (std::size_t j = 0; j < acts.width; ++j) {
    per_neuron[j] = best_for_neuron(acts, j, rows, labels, min_samples_leaf, present, buf);
  }
  return reduce(per_neuron);
}

SplitCandidate find_best_split(const LayerActivations& acts, std::span<const std::size_t> rows,
                               std::span<const std::uint8_t> labels, std::size_t min_samples_leaf) {
  if (rows.size() < 2) return {};
  const std::size_t present = count_present(rows, labels);
  std::vector<SplitCandidate> per_neuron(acts.width);
  const auto width = static_cast<std::ptrdiff_t>(acts.width);
#pragma omp parallel
  {
    std::vector<Entry> buf;
#pragma omp for schedule(dynamic, 8)
    for (std::ptrdiff_t j = 0; j < width; ++j) {
      per_neuron[static_cast<std::size_t>(j)] =
          best_for_neuron(acts, static_cast<std::size_t>(j), rows, labels, min_samples_leaf, present, buf);
    }
  }
  return reduce(per_neuron);
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const LayerActivations& acts, std::span<const std::uint8_t> labels, const TreeHyperparams& hp,
              DecisionTree& tree)
      : acts_(acts), labels_(labels), hp_(hp), tree_(tree) {}

  int build(std::vector<std::size_t> rows, int depth) {
    const auto idx = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    TreeNode node;
    node.present = count_present(rows, labels_);
    node.absent = rows.size() - node.present;
    node.verdict = node.present > node.absent ? Verdict::Present : Verdict::Absent;

    const bool stop = node.present == 0 || node.absent == 0 || depth >= hp_.max_depth ||
                      rows.size() < 2 * std::max<std::size_t>(hp_.min_samples_leaf, 1);
    SplitCandidate split;
    if (!stop) split = find_best_split(acts_, rows, labels_, hp_.min_samples_leaf);
    if (!split.valid) {
      tree_.nodes[static_cast<std::size_t>(idx)] = node;
      return idx;
    }

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t r : rows) {
      (static_cast<double>(acts_.at(r, split.neuron)) <= split.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    node.leaf = false;
    node.neuron = split.neuron;
    node.threshold = split.threshold;
    node.left = build(std::move(left), depth + 1);
    node.right = build(std::move(right), depth + 1);
    tree_.nodes[static_cast<std::size_t>(idx)] = node;
    return idx;
  }

 private:
  const LayerActivations& acts_;
  std::span<const std::uint8_t> labels_;
  const TreeHyperparams& hp_;
  DecisionTree& tree_;
};

}  // namespace

DecisionTree induce_tree(const LayerActivations& acts, std::span<const std::uint8_t> labels,
                         const TreeHyperparams& hp, std::string concept_name) {
  const std::size_t n = acts.width == 0 ? 0 : acts.values.size() / acts.width;
  if (n == 0) throw Error(ErrorKind::Validation, "induce_tree: no samples");
  if (n > kMaxSamples) throw Error(ErrorKind::Validation, "induce_tree: more than 2^20 samples");
  if (labels.size() != n) throw Error(ErrorKind::DimensionMismatch, "induce_tree: one label per sample required");
  if (hp.max_depth < 0) throw Error(ErrorKind::Config, "max_depth must be non-negative");
  if (hp.min_samples_leaf == 0) throw Error(ErrorKind::Config, "min_samples_leaf must be at least 1");

  DecisionTree tree;
  tree.concept_name = std::move(concept_name);
  tree.layer = acts.layer;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  TreeBuilder(acts, labels, hp, tree).build(std::move(rows), 0);
  return tree;
}

DecisionTree induce_tree(const ActivationDataset& acts, std::size_t concept_idx, const std::string& layer,
                         const TreeHyperparams& hp) {
  if (concept_idx >= acts.concepts.size()) throw Error(ErrorKind::Validation, "induce_tree: concept out of range");
  const auto labels = acts.concept_labels(concept_idx);
  return induce_tree(acts.layer(layer), labels, hp, acts.concepts[concept_idx].name);
}

}  // namespace cbp
