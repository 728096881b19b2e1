#include "cbp/identifier.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cbp/error.hpp"

namespace cbp {

using nlohmann::json;

bool DecisionRule::matches(std::span<const float> activations) const {
  return std::all_of(conditions.begin(), conditions.end(),
                     [&](const Condition& c) { return c.holds(activations[c.neuron]); });
}

std::vector<DecisionRule> extract_rules(const DecisionTree& tree, std::size_t total_present,
                                        std::size_t total_absent) {
  std::vector<DecisionRule> rules;
  std::vector<Condition> path;
  auto visit = [&](auto&& self, int idx) -> void {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.leaf) {
      // A root leaf has no preconditions and cannot name a neuron.
      if (!node.pure() || path.empty()) return;
      DecisionRule r;
      r.concept_name = tree.concept_name;
      r.layer = tree.layer;
      r.conditions = path;
      r.post = node.verdict;
      r.present = node.present;
      r.absent = node.absent;
      const std::size_t covered = node.verdict == Verdict::Present ? node.present : node.absent;
      const std::size_t denom = node.verdict == Verdict::Present ? total_present : total_absent;
      r.training_recall = denom == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(denom);
      rules.push_back(std::move(r));
      return;
    }
    path.push_back({node.neuron, Comparator::LessEqual, node.threshold});
    self(self, node.left);
    path.back().cmp = Comparator::Greater;
    self(self, node.right);
    path.pop_back();
  };
  if (!tree.nodes.empty()) visit(visit, 0);
  return rules;
}

std::vector<DecisionRule> extract_rules(const DecisionTree& tree, const ActivationDataset& acts) {
  const auto idx = acts.concept_index(tree.concept_name);
  if (!idx) throw Error(ErrorKind::Validation, "unknown concept '" + tree.concept_name + "'");
  std::size_t present = 0;
  for (const auto& s : acts.samples) present += s.concept_flags[*idx] ? 1 : 0;
  return extract_rules(tree, present, acts.size() - present);
}

AggregationPolicy AggregationPolicy::parse(std::string_view text) {
  auto number_after_colon = [&](std::string_view prefix) -> double {
    const std::string_view rest = text.substr(prefix.size());
    double value = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
    if (ec != std::errc() || ptr != rest.data() + rest.size() || rest.empty()) {
      throw Error(ErrorKind::Config, "invalid policy '" + std::string(text) + "'");
    }
    return value;
  };
  AggregationPolicy p;
  if (text == "all") {
    p = all();
  } else if (text == "avg") {
    p = avg();
  } else if (text.starts_with("top:")) {
    const double n = number_after_colon("top:");
    if (n != static_cast<double>(static_cast<int>(n))) {
      throw Error(ErrorKind::Config, "top:N needs an integer N");
    }
    p = top(static_cast<int>(n));
  } else if (text.starts_with("rec:")) {
    p = rec(number_after_colon("rec:"));
  } else {
    throw Error(ErrorKind::Config, "unknown policy '" + std::string(text) + "' (expected all, top:N, rec:X or avg)");
  }
  p.validate();
  return p;
}

std::string AggregationPolicy::to_string() const {
  switch (kind) {
    case Kind::AllRules: return "all";
    case Kind::Top: return "top:" + std::to_string(top_n);
    case Kind::Rec: {
      json j = rec_percent;
      return "rec:" + j.dump();
    }
    case Kind::Avg: return "avg";
  }
  return "all";
}

void AggregationPolicy::validate() const {
  if (kind == Kind::Top && top_n <= 0) throw Error(ErrorKind::Config, "top:N requires N > 0");
  if (kind == Kind::Rec && !(rec_percent > 0.0 && rec_percent <= 100.0)) {
    throw Error(ErrorKind::Config, "rec:X requires X in (0, 100]");
  }
}

namespace {

std::vector<DecisionRule> select_group(std::vector<DecisionRule> group, const AggregationPolicy& policy) {
  using Kind = AggregationPolicy::Kind;
  if (policy.kind == Kind::AllRules) return group;
  std::stable_sort(group.begin(), group.end(), [](const DecisionRule& a, const DecisionRule& b) {
    return a.training_recall > b.training_recall;
  });
  switch (policy.kind) {
    case Kind::Top:
      if (group.size() > static_cast<std::size_t>(policy.top_n)) group.resize(static_cast<std::size_t>(policy.top_n));
      return group;
    case Kind::Rec: {
      const double target = policy.rec_percent / 100.0;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < group.size(); ++i) {
        cumulative += group[i].training_recall;
        if (cumulative > target) {
          group.resize(i + 1);
          return group;
        }
      }
      return group;
    }
    case Kind::Avg: {
      const double sum = std::accumulate(group.begin(), group.end(), 0.0,
                                         [](double acc, const DecisionRule& r) { return acc + r.training_recall; });
      const auto n = static_cast<double>(group.size());
      std::vector<DecisionRule> out;
      // r > sum / n, compared without dividing
      for (auto& r : group) {
        if (r.training_recall * n > sum) out.push_back(std::move(r));
      }
      return out;
    }
    case Kind::AllRules: break;
  }
  return group;
}

}  // namespace

std::vector<DecisionRule> aggregate(std::span<const DecisionRule> rules, const AggregationPolicy& policy) {
  policy.validate();
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<DecisionRule>> groups;
  for (const auto& r : rules) {
    auto key = std::make_pair(r.concept_name, r.layer);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(r);
  }
  std::vector<DecisionRule> out;
  for (const auto& key : order) {
    auto kept = select_group(std::move(groups[key]), policy);
    std::move(kept.begin(), kept.end(), std::back_inserter(out));
  }
  return out;
}

const std::set<std::size_t>& KeepSet::neurons(const std::string& layer) const {
  static const std::set<std::size_t> empty;
  const auto it = layers.find(layer);
  return it == layers.end() ? empty : it->second;
}

std::size_t KeepSet::total() const {
  std::size_t n = 0;
  for (const auto& [_, s] : layers) n += s.size();
  return n;
}

bool KeepSet::subset_of(const KeepSet& other) const {
  for (const auto& [layer, s] : layers) {
    const auto& o = other.neurons(layer);
    if (!std::includes(o.begin(), o.end(), s.begin(), s.end())) return false;
  }
  return true;
}

KeepSet keep_set(std::span<const DecisionRule> rules, const Network& net) {
  KeepSet keep;
  for (const auto& r : rules) {
    const std::size_t idx = net.layer_index(r.layer);
    const LayerSpec& spec = net.layer(idx);
    auto& set = keep.layers[r.layer];
    for (const auto& c : r.conditions) {
      if (c.neuron >= spec.output_dim) {
        throw Error(ErrorKind::Validation, "rule references neuron " + std::to_string(c.neuron) + " of layer '" +
                                               r.layer + "' with " + std::to_string(spec.output_dim) + " neurons");
      }
      set.insert(c.neuron);
    }
  }
  return keep;
}

Identification identify(const ActivationDataset& acts, const Network& net, const IdentifierConfig& config) {
  if (acts.size() == 0) throw Error(ErrorKind::IdentificationInputEmpty, "no samples for identification");
  if (acts.network_fingerprint != net.fingerprint()) {
    throw Error(ErrorKind::FingerprintMismatch, "activations were captured from a different network");
  }
  const AggregationPolicy policy = config.effective_policy();
  policy.validate();
  const std::vector<std::string> layers = config.layers.empty() ? default_analyzed_layers(net) : config.layers;

  Identification out;
  for (std::size_t c = 0; c < acts.concepts.size(); ++c) {
    const auto labels = acts.concept_labels(c);
    const std::size_t present = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    for (const auto& layer : layers) {
      DecisionTree tree = induce_tree(acts.layer(layer), labels, config.tree, acts.concepts[c].name);
      auto rules = extract_rules(tree, present, labels.size() - present);
      out.rules.insert(out.rules.end(), rules.begin(), rules.end());
      out.trees.push_back(std::move(tree));
    }
  }
  std::vector<DecisionRule> pool;
  for (const auto& r : out.rules) {
    if (config.keep_absent_rules || r.post == Verdict::Present) pool.push_back(r);
  }
  out.retained = aggregate(pool, policy);
  out.keep = keep_set(out.retained, net);
  for (const auto& layer : layers) out.keep.layers[layer];
  return out;
}

std::string rule_to_json_line(const DecisionRule& rule) {
  json conds = json::array();
  for (const auto& c : rule.conditions) {
    conds.push_back({{"neuron", c.neuron}, {"cmp", c.cmp == Comparator::LessEqual ? "<=" : ">"}, {"thr", c.threshold}});
  }
  const json j{{"concept", rule.concept_name}, {"layer", rule.layer},     {"conditions", conds},
               {"post", to_string(rule.post)},   {"a", rule.present},      {"b", rule.absent},
               {"recall", rule.training_recall}};
  return j.dump();
}

DecisionRule rule_from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    DecisionRule r;
    r.concept_name = j.at("concept").get<std::string>();
    r.layer = j.at("layer").get<std::string>();
    for (const auto& c : j.at("conditions")) {
      const auto cmp = c.at("cmp").get<std::string>();
      if (cmp != "<=" && cmp != ">") throw Error(ErrorKind::Validation, "rule: unknown comparator '" + cmp + "'");
      r.conditions.push_back({c.at("neuron").get<std::size_t>(),
                              cmp == "<=" ? Comparator::LessEqual : Comparator::Greater, c.at("thr").get<double>()});
    }
    const auto post = j.at("post").get<std::string>();
    if (post != "present" && post != "absent") throw Error(ErrorKind::Validation, "rule: unknown post '" + post + "'");
    r.post = post == "present" ? Verdict::Present : Verdict::Absent;
    r.present = j.at("a").get<std::size_t>();
    r.absent = j.at("b").get<std::size_t>();
    r.training_recall = j.at("recall").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("rule: ") + e.what());
  }
}

void write_rules_jsonl(const std::filesystem::path& path, std::span<const DecisionRule> rules) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  for (const auto& r : rules) out << rule_to_json_line(r) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

std::vector<DecisionRule> read_rules_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<DecisionRule> rules;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rules.push_back(rule_from_json_line(line));
  }
  return rules;
}

}  // namespace cbp
