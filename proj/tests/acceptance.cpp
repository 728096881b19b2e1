// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "cbp/driver.hpp"
#include "cbp/error.hpp"
#include "cbp/identifier.hpp"
#include "cbp/inference.hpp"
#include "cbp/metrics.hpp"
#include "cbp/model_io.hpp"
#include "cbp/pruner.hpp"
#include "equine_tree_fixture.hpp"
#include "split_oracle.hpp"
#include "test_support.hpp"

namespace {

using namespace cbp;
using testing::TempDir;

// Collects the first few failed expectations of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 5) detail_ += (detail_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failures_ == 0; }
  const std::string& detail() const { return detail_; }

 private:
  int failures_ = 0;
  std::string detail_;
};

std::string m2(std::uint64_t v) { return format_fixed(static_cast<double>(v) / 1e6, 2); }

Architecture vgg_shrunk(std::size_t fc1, std::size_t fc2) {
  Architecture arch = load_architecture(testing::kVggManifest);
  arch[1].output_dim = fc1;
  arch[2].input_dim = fc1;
  arch[2].output_dim = fc2;
  arch[3].input_dim = fc2;
  return arch;
}

void accounting(Check& c) {
  const Architecture base = load_architecture(testing::kVggManifest);
  c.expect(param_count(base) == 143'667'240u, "baseline params " + std::to_string(param_count(base)));
  const Architecture row1 = vgg_shrunk(2622, 2357);
  c.expect(param_count(row1) == 94'348'153u, "(2622,2357) params " + std::to_string(param_count(row1)));
  c.expect(m2(param_count(row1)) == "94.35", "(2622,2357) params_m " + m2(param_count(row1)));
  const MacCount macs1 = mac_count(row1);
  c.expect(macs1.per_layer[1] == 65'780'736u && macs1.per_layer[2] == 6'180'054u, "(2622,2357) MACs");
  c.expect(m2(macs1.per_layer[1]) == "65.78" && m2(macs1.per_layer[2]) == "6.18", "(2622,2357) MACs rounding");

  struct Row {
    std::size_t fc1, fc2;
    const char *params, *mac1, *mac2;
  };
  for (const Row& r : {Row{1241, 1088, "53.60", "31.13", "1.35"}, Row{744, 676, "39.87", "18.67", "0.50"}}) {
    const Architecture a = vgg_shrunk(r.fc1, r.fc2);
    const MacCount m = mac_count(a);
    const std::string tag = "(" + std::to_string(r.fc1) + "," + std::to_string(r.fc2) + ")";
    c.expect(m2(param_count(a)) == r.params, tag + " params_m " + m2(param_count(a)));
    c.expect(m2(m.per_layer[1]) == r.mac1, tag + " FC1 MACs " + m2(m.per_layer[1]));
    c.expect(m2(m.per_layer[2]) == r.mac2, tag + " FC2 MACs " + m2(m.per_layer[2]));
  }
}

void size(Check& c) {
  const auto within = [](double got, double want) { return std::abs(got - want) <= want * 0.001; };
  const double base = bytes_to_mb(size_bytes(load_architecture(testing::kVggManifest)));
  const double row1 = bytes_to_mb(size_bytes(vgg_shrunk(2622, 2357)));
  c.expect(within(base, 574.70), "baseline size " + format_fixed(base, 2));
  c.expect(within(row1, 377.42), "iteration-1 size " + format_fixed(row1, 2));
}

void fps(Check& c) {
  for (auto [ms, want] : {std::pair{13.35, "74.91"}, std::pair{10.79, "92.68"}}) {
    const std::vector<double> samples{ms, ms, ms};
    const std::string got = format_fixed(latency_from_samples(samples).fps, 2);
    c.expect(got == want, format_fixed(ms, 2) + " ms -> " + got);
  }
}

void equine_tree(Check& c) {
  const auto f = testing::make_equine_tree_fixture();
  const DecisionTree t = induce_tree(f.acts, f.labels, {}, "equine");
  c.expect(t.leaf_count() == 4 && t.depth() == 2, "tree shape");
  if (!c.ok()) return;
  const TreeNode& root = t.root();
  const TreeNode& l = t.nodes[root.left];
  const TreeNode& r = t.nodes[root.right];
  const auto near = [](double a, double b) { return std::abs(a - b) < 1e-6; };
  c.expect(root.neuron == 12 && near(root.threshold, 1.65), "root split");
  c.expect(l.neuron == 543 && near(l.threshold, 3.21), "left split");
  c.expect(r.neuron == 1843 && near(r.threshold, 2.93), "right split");
  const std::pair<std::size_t, std::size_t> want[] = {{984, 0}, {0, 1238}, {4290, 0}, {0, 244}};
  const int leaves[] = {l.left, l.right, r.left, r.right};
  for (int k = 0; k < 4; ++k) {
    const TreeNode& leaf = t.nodes[leaves[k]];
    c.expect(leaf.leaf && leaf.present == want[k].first && leaf.absent == want[k].second,
             "leaf " + std::to_string(k) + " tuple");
  }

  const auto rules = extract_rules(t, 984 + 4290, 1238 + 244);
  std::vector<const DecisionRule*> present;
  for (const auto& rule : rules) {
    if (rule.post == Verdict::Present) present.push_back(&rule);
  }
  c.expect(rules.size() == 4 && present.size() == 2, "rule count");
  if (present.size() == 2) {
    const auto& a = present[0]->conditions;
    const auto& b = present[1]->conditions;
    c.expect(a.size() == 2 && a[0].neuron == 12 && a[0].cmp == Comparator::LessEqual && near(a[0].threshold, 1.65) &&
                 a[1].neuron == 543 && a[1].cmp == Comparator::LessEqual && near(a[1].threshold, 3.21),
             "rule N12 <= 1.65 and N543 <= 3.21 -> equine");
    c.expect(b.size() == 2 && b[0].neuron == 12 && b[0].cmp == Comparator::Greater && near(b[0].threshold, 1.65) &&
                 b[1].neuron == 1843 && b[1].cmp == Comparator::LessEqual && near(b[1].threshold, 2.93),
             "rule N12 > 1.65 and N1843 <= 2.93 -> equine");
  }
  const Architecture arch{{LayerKind::Dense, "fc1", 1, testing::kEquineTreeWidth, 0, 0, true},
                          {LayerKind::Output, "out", testing::kEquineTreeWidth, 2, 0, 0, false}};
  const KeepSet keep = keep_set(rules, Network::zeros(arch, {"equine", "other"}));
  c.expect(keep.neurons("fc1") == std::set<std::size_t>{12, 543, 1843}, "keep set");
}

void tree_oracle(Check& c) {
  std::mt19937 rng(7);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng() % 8, width = 1 + rng() % 4;
    LayerActivations acts{"fc1", width, {}};
    std::vector<std::uint8_t> labels;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < width; ++j) acts.values.push_back(static_cast<float>(rng() % 5) * 0.5f);
      labels.push_back(rng() % 2);
    }
    const DecisionTree t = induce_tree(acts, labels, {});
    const auto oracle = testing::brute_force_split(acts, labels);
    const std::size_t p = std::count(labels.begin(), labels.end(), 1);
    const std::string tag = "dataset " + std::to_string(trial);
    if (p == 0 || p == n || !oracle.valid) {
      c.expect(t.root().leaf, tag + ": expected a root leaf");
    } else {
      c.expect(!t.root().leaf && t.root().neuron == oracle.neuron && t.root().threshold == oracle.threshold,
               tag + ": root split differs from the exhaustive optimum");
    }
    for (const auto& rule : extract_rules(t, p, n - p)) {
      c.expect(rule.pure(), tag + ": impure rule");
      for (std::size_t s = 0; s < n; ++s) {
        if (rule.matches(acts.row(s))) c.expect((labels[s] == 1) == (rule.post == Verdict::Present), tag + ": unsound");
      }
    }
    ++checked;
  }
  c.expect(checked >= 200, "fewer than 200 datasets");
}

void pruner_invariance(Check& c) {
  const Network base = testing::random_mlp({6, 10, 8, 4}, 17);
  std::vector<DenseParams> params(base.all_params().begin(), base.all_params().end());
  for (std::size_t o = 0; o < 8; ++o) params[1].weight[o * 10 + 2] = params[1].weight[o * 10 + 7] = 0.0f;
  for (std::size_t o = 0; o < 4; ++o) params[2].weight[o * 8 + 5] = 0.0f;
  const Network net(base.layers(), params, base.class_names());
  PruningPlan plan;
  plan.remove["fc1"] = {2, 7};
  plan.remove["fc2"] = {5};
  const Network pruned = cbp::apply(net, plan);
  std::mt19937 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto x = testing::random_input(6, rng);
    c.expect(forward(net, x).logits == forward(pruned, x).logits, "logits differ on input " + std::to_string(t));
  }
  c.expect(cbp::apply(net, PruningPlan{}) == net, "empty plan changed the network");

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t in = 1 + rng() % 10, h1 = 2 + rng() % 12, h2 = 2 + rng() % 12, out = 1 + rng() % 5;
    const Network m = testing::random_mlp({in, h1, h2, out}, 100 + trial);
    PruningPlan p;
    for (std::size_t n = 0; n < h1 && p.remove["fc1"].size() + 1 < h1; ++n) {
      if (rng() % 2) p.remove["fc1"].push_back(n);
    }
    for (std::size_t n = 0; n < h2 && p.remove["fc2"].size() + 1 < h2; ++n) {
      if (rng() % 2) p.remove["fc2"].push_back(n);
    }
    const std::uint64_t k1 = p.remove["fc1"].size(), k2 = p.remove["fc2"].size();
    // Rows (with bias) of each pruned layer plus the matching inputs of its successor.
    const std::uint64_t delta = k1 * (in + 1) + k1 * (h2 - k2) + k2 * (h1 + 1) + k2 * out;
    const Network after = cbp::apply(m, p);
    c.expect(param_count(m) - param_count(after) == delta, "delta params, plan " + std::to_string(trial));
  }
}

struct Desk {
  Network net = load_network(testing::kDeskModel);
  DatasetSplit data = load_dataset(DatasetFiles::in(testing::kDeskData));
};

void desk_run(Check& c, const Desk& desk) {
  const RunResult r = run(desk.net, desk.data, CbpConfig{});
  const auto baseline_precision = r.baseline.metrics.effectiveness.precision.value_or(0.0);
  c.expect(baseline_precision >= 0.90, "fixture baseline accuracy " + format_fixed(baseline_precision, 4));
  c.expect(!r.reports.empty() && r.reports.size() <= 100, "iteration count " + std::to_string(r.reports.size()));
  if (r.reports.empty()) return;
  const auto& last = r.reports.back();
  c.expect(last.stop_reason == StopReason::NoProgress,
           std::string("stop reason ") + (last.stop_reason ? to_string(*last.stop_reason) : "none"));
  c.expect(r.reports.front().total_removed() > 0, "first iteration removed nothing");
  auto prev = r.baseline.metrics.size.neurons;
  for (const auto& rep : r.reports) {
    for (std::size_t l = 0; l < prev.size(); ++l) {
      c.expect(rep.metrics.size.neurons[l].second <= prev[l].second,
               "neuron count grew at iteration " + std::to_string(rep.iteration()));
    }
    prev = rep.metrics.size.neurons;
  }
  const double final_precision = last.metrics.effectiveness.precision.value_or(0.0);
  c.expect(std::abs(final_precision - baseline_precision) <= 0.05,
           "precision " + format_fixed(baseline_precision, 4) + " -> " + format_fixed(final_precision, 4));
}

void configuration_monotonicity(Check& c, const Desk& desk) {
  const ActivationDataset all = capture(desk.net, desk.data.train, SplitKind::Train, desk.data.catalog);
  const ActivationDataset correct = filter_for_identification(all, false);
  auto keep = [&](AggregationPolicy policy) {
    IdentifierConfig cfg;
    cfg.mode = policy == AggregationPolicy::all() ? IdentifierMode::Fga : IdentifierMode::Efga;
    cfg.policy = policy;
    cfg.layers = default_analyzed_layers(desk.net);
    return identify(correct, desk.net, cfg).keep;
  };
  const KeepSet k1 = keep(AggregationPolicy::top(1));
  const KeepSet k3 = keep(AggregationPolicy::top(3));
  const KeepSet k10 = keep(AggregationPolicy::top(10));
  const KeepSet kall = keep(AggregationPolicy::all());
  c.expect(k1.subset_of(k3), "Top(1) not within Top(3)");
  c.expect(k3.subset_of(k10), "Top(3) not within Top(10)");
  c.expect(k10.subset_of(kall), "Top(10) not within AllRules");

  CbpConfig cfg;
  cfg.latency_runs = 0;
  cfg.stopping.max_iterations = 1;
  const RunResult without = run(desk.net, desk.data, cfg);
  cfg.include_misclassified = true;
  const RunResult with = run(desk.net, desk.data, cfg);
  const std::size_t wrong = all.misclassified_count();
  const std::size_t diff = with.reports[0].identification_samples - without.reports[0].identification_samples;
  c.expect(wrong > 0, "fixture has no misclassified training sample");
  c.expect(diff == wrong, "input grew by " + std::to_string(diff) + ", misclassified " + std::to_string(wrong));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string run_log_without_timing(const std::filesystem::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    auto fields = split_csv(line);
    if (header.empty()) {
      header = fields;
    } else {
      for (std::size_t i = 0; i < fields.size() && i < header.size(); ++i) {
        if (is_timing_column(header[i])) fields[i].clear();
      }
    }
    out += join_csv(fields) + "\n";
  }
  return out;
}

void determinism_and_resume(Check& c, const Desk& desk) {
  TempDir a("acc_a"), b("acc_b"), part("acc_part");
  CbpConfig cfg;
  cfg.mode = IdentifierMode::Efga;
  cfg.policy = AggregationPolicy::top(1);
  cfg.latency_runs = 5;
  CbpConfig ca = cfg, cb = cfg, cp = cfg;
  ca.checkpoint_dir = a.path();
  cb.checkpoint_dir = b.path();
  cp.checkpoint_dir = part.path();
  const RunResult ra = run(desk.net, desk.data, ca);
  const RunResult rb = run(desk.net, desk.data, cb);
  c.expect(ra.reports.size() == rb.reports.size() && ra.reports.size() >= 3, "twin trajectory lengths");
  for (int it = 0; it <= static_cast<int>(ra.reports.size()); ++it) {
    const auto da = iteration_dir(a.path(), it), db = iteration_dir(b.path(), it);
    for (const char* f : {"manifest.json", "weights.bin", "rules.jsonl", "plan.json"}) {
      c.expect(slurp(da / f) == slurp(db / f), "twin " + std::string(f) + " differs at iteration " + std::to_string(it));
    }
    const auto ja = report_to_json(report_from_json(read_json_file(da / "report.json")), false);
    const auto jb = report_to_json(report_from_json(read_json_file(db / "report.json")), false);
    c.expect(ja == jb, "twin report differs at iteration " + std::to_string(it));
  }
  c.expect(run_log_without_timing(a / "run.csv") == run_log_without_timing(b / "run.csv"), "twin run logs differ");

  RunHooks interrupt;
  interrupt.on_iteration = [](const IterationReport& r) { return r.iteration() < 2; };
  const RunResult head = run(desk.net, desk.data, cp, interrupt);
  const RunResult tail = resume(desk.data, cp);
  c.expect(head.reports.size() + tail.reports.size() == ra.reports.size(), "resumed trajectory length");
  for (std::size_t i = 0; i < tail.reports.size() && i + 2 < ra.reports.size(); ++i) {
    c.expect(report_to_json(tail.reports[i], false) == report_to_json(ra.reports[i + 2], false),
             "resumed iteration " + std::to_string(i + 3) + " differs");
  }
  c.expect(tail.final_network == ra.final_network, "resumed final network differs");
  c.expect(run_log_without_timing(part / "run.csv") == run_log_without_timing(a / "run.csv"),
           "resumed run log differs");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Check&)> body;
  };
  std::optional<Desk> desk;
  auto with_desk = [&](void (*f)(Check&, const Desk&)) {
    return [&desk, f](Check& c) {
      if (!desk) desk.emplace();
      f(c, *desk);
    };
  };
  const Criterion criteria[] = {
      {"accounting reproduction (VGG-19 params and FC MACs)", accounting},
      {"size reproduction (4 x params / 1e6 within 0.1%)", size},
      {"fps identity (1000 / mean latency)", fps},
      {"equine decision tree replay (topology, rules, keep set)", equine_tree},
      {"tree oracle equivalence on random small datasets", tree_oracle},
      {"pruner functional invariance and parameter delta", pruner_invariance},
      {"desk-scale end-to-end run", with_desk(desk_run)},
      {"configuration monotonicity", with_desk(configuration_monotonicity)},
      {"determinism and resume", with_desk(determinism_and_resume)},
  };
  int failed = 0;
  int index = 0;
  for (const auto& criterion : criteria) {
    ++index;
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (check.ok() ? "PASS" : "FAIL") << "  criterion " << index << ": " << criterion.name << " ("
              << format_fixed(secs, 2) << " s)";
    if (!check.ok()) std::cout << " -- " << check.detail();
    std::cout << '\n';
    failed += check.ok() ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
