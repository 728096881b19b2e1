#include "cbp/driver.hpp"

#include <chrono>
#include <fstream>

#include "cbp/binary_io.hpp"
#include "cbp/error.hpp"
#include "cbp/inference.hpp"
#include "cbp/model_io.hpp"
#include "cbp/pruner.hpp"

namespace cbp {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::NoProgress: return "NoProgress";
    case StopReason::MaxIterations: return "MaxIterations";
    case StopReason::TargetSize: return "TargetSize";
    case StopReason::MinAccuracy: return "MinAccuracy";
    case StopReason::WouldEmptyLayer: return "WouldEmptyLayer";
    case StopReason::IdentificationInputEmpty: return "IdentificationInputEmpty";
  }
  return "unknown";
}

StopReason stop_reason_from_string(std::string_view text) {
  for (auto r : {StopReason::NoProgress, StopReason::MaxIterations, StopReason::TargetSize, StopReason::MinAccuracy,
                 StopReason::WouldEmptyLayer, StopReason::IdentificationInputEmpty}) {
    if (text == to_string(r)) return r;
  }
  throw Error(ErrorKind::Validation, "unknown stop reason '" + std::string(text) + "'");
}

void CbpConfig::validate() const {
  if (stopping.max_iterations < 1) throw Error(ErrorKind::Config, "max_iterations must be at least 1");
  if (stopping.min_accuracy && !(*stopping.min_accuracy >= 0.0 && *stopping.min_accuracy <= 1.0)) {
    throw Error(ErrorKind::Config, "min_accuracy must lie in [0, 1]");
  }
  if (tree.max_depth < 1) throw Error(ErrorKind::Config, "tree max_depth must be at least 1");
  if (tree.min_samples_leaf < 1) throw Error(ErrorKind::Config, "tree min_samples_leaf must be at least 1");
  if (latency_runs != 0 && latency_runs < 2) throw Error(ErrorKind::Config, "latency_runs must be 0 or >= 2");
  if (mode == IdentifierMode::Efga && policy.kind == AggregationPolicy::Kind::AllRules) {
    throw Error(ErrorKind::Config, "the efga identifier needs a policy (top:N, rec:X or avg)");
  }
  policy.validate();
}

IdentifierConfig CbpConfig::identifier_config(const std::vector<std::string>& layers) const {
  IdentifierConfig c;
  c.mode = mode;
  c.policy = policy;
  c.tree = tree;
  c.keep_absent_rules = keep_absent_rules;
  c.layers = layers;
  return c;
}

json CbpConfig::to_json() const {
  json stop{{"max_iterations", stopping.max_iterations},
            {"target_params", nullptr},
            {"min_accuracy", nullptr},
            {"stop_on_no_progress", stopping.stop_on_no_progress}};
  if (stopping.target_params) stop["target_params"] = *stopping.target_params;
  if (stopping.min_accuracy) stop["min_accuracy"] = *stopping.min_accuracy;
  return {{"analyzed_layers", analyzed_layers},
          {"include_misclassified", include_misclassified},
          {"identifier", mode == IdentifierMode::Fga ? "fga" : "efga"},
          {"policy", policy.to_string()},
          {"tree", {{"max_depth", tree.max_depth}, {"min_samples_leaf", tree.min_samples_leaf}}},
          {"keep_absent_rules", keep_absent_rules},
          {"stopping", stop},
          {"latency_runs", latency_runs},
          {"aggregation", aggregation == Aggregation::Micro ? "micro" : "macro"},
          {"checkpoint_dir", checkpoint_dir.string()}};
}

CbpConfig CbpConfig::from_json(const json& j) {
  CbpConfig c;
  if (!j.is_object()) throw Error(ErrorKind::Config, "config: expected a JSON object");
  const json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorKind::Config, "config: unknown key '" + key + "'");
  }
  try {
    c.analyzed_layers = j.value("analyzed_layers", c.analyzed_layers);
    c.include_misclassified = j.value("include_misclassified", c.include_misclassified);
    const auto mode = j.value("identifier", std::string("fga"));
    if (mode != "fga" && mode != "efga") throw Error(ErrorKind::Config, "identifier must be 'fga' or 'efga'");
    c.mode = mode == "fga" ? IdentifierMode::Fga : IdentifierMode::Efga;
    c.policy = AggregationPolicy::parse(j.value("policy", std::string("all")));
    if (j.contains("tree")) {
      c.tree.max_depth = j["tree"].value("max_depth", c.tree.max_depth);
      c.tree.min_samples_leaf = j["tree"].value("min_samples_leaf", c.tree.min_samples_leaf);
    }
    c.keep_absent_rules = j.value("keep_absent_rules", c.keep_absent_rules);
    if (j.contains("stopping")) {
      const auto& s = j["stopping"];
      c.stopping.max_iterations = s.value("max_iterations", c.stopping.max_iterations);
      if (s.contains("target_params") && !s["target_params"].is_null()) {
        c.stopping.target_params = s["target_params"].get<std::uint64_t>();
      }
      if (s.contains("min_accuracy") && !s["min_accuracy"].is_null()) {
        c.stopping.min_accuracy = s["min_accuracy"].get<double>();
      }
      c.stopping.stop_on_no_progress = s.value("stop_on_no_progress", c.stopping.stop_on_no_progress);
    }
    c.latency_runs = j.value("latency_runs", c.latency_runs);
    const auto agg = j.value("aggregation", std::string("micro"));
    if (agg != "micro" && agg != "macro") throw Error(ErrorKind::Config, "aggregation must be 'micro' or 'macro'");
    c.aggregation = agg == "micro" ? Aggregation::Micro : Aggregation::Macro;
    c.checkpoint_dir = j.value("checkpoint_dir", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t CbpConfig::hash() const {
  json j = to_json();
  j.erase("checkpoint_dir");
  Fnv1a h;
  h.update(j.dump());
  return h.digest();
}

std::size_t IterationReport::total_removed() const {
  std::size_t n = 0;
  for (const auto& [_, r] : removed) n += r;
  return n;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

template <class T>
json pairs_to_json(const std::vector<std::pair<std::string, T>>& pairs) {
  json arr = json::array();
  for (const auto& [k, v] : pairs) arr.push_back(json::array({k, v}));
  return arr;
}

template <class T>
std::vector<std::pair<std::string, T>> pairs_from_json(const json& j) {
  std::vector<std::pair<std::string, T>> out;
  for (const auto& p : j) out.emplace_back(p.at(0).get<std::string>(), p.at(1).get<T>());
  return out;
}

}  // namespace

json report_to_json(const IterationReport& r, bool include_timing) {
  const auto& m = r.metrics;
  json j{{"iteration", m.iteration},
         {"neurons", pairs_to_json(m.size.neurons)},
         {"params", m.size.params},
         {"size_mb", m.size.size_mb},
         {"macs", pairs_to_json(m.size.macs)},
         {"total_macs", m.size.total_macs},
         {"accuracy", optional_json(m.effectiveness.accuracy)},
         {"precision", optional_json(m.effectiveness.precision)},
         {"recall", optional_json(m.effectiveness.recall)},
         {"f1", optional_json(m.effectiveness.f1)},
         {"removed", r.removed},
         {"identification_samples", r.identification_samples},
         {"rules_extracted", r.rules_extracted},
         {"rules_retained", r.rules_retained},
         {"stop_reason", r.stop_reason ? json(to_string(*r.stop_reason)) : json(nullptr)},
         {"network_fingerprint", hex64(r.network_fingerprint)}};
  if (include_timing) {
    j["latency"] = m.latency ? json{{"mean_ms", m.latency->mean_ms}, {"std_ms", m.latency->std_ms}, {"fps", m.latency->fps}}
                             : json(nullptr);
    j["t_identifier_s"] = optional_json(m.t_identifier_s);
    j["t_pruner_s"] = optional_json(m.t_pruner_s);
    j["t_total_s"] = optional_json(m.t_total_s);
  }
  return j;
}

IterationReport report_from_json(const json& j) {
  IterationReport r;
  try {
    auto& m = r.metrics;
    m.iteration = j.at("iteration").get<int>();
    m.size.neurons = pairs_from_json<std::size_t>(j.at("neurons"));
    m.size.params = j.at("params").get<std::uint64_t>();
    m.size.size_mb = j.at("size_mb").get<double>();
    m.size.macs = pairs_from_json<std::uint64_t>(j.at("macs"));
    m.size.total_macs = j.at("total_macs").get<std::uint64_t>();
    m.effectiveness = {optional_from(j, "accuracy"), optional_from(j, "precision"), optional_from(j, "recall"),
                       optional_from(j, "f1")};
    if (j.contains("latency") && !j["latency"].is_null()) {
      const auto& l = j["latency"];
      m.latency = LatencyReport{l.at("mean_ms").get<double>(), l.at("std_ms").get<double>(), l.at("fps").get<double>()};
    }
    m.t_identifier_s = optional_from(j, "t_identifier_s");
    m.t_pruner_s = optional_from(j, "t_pruner_s");
    m.t_total_s = optional_from(j, "t_total_s");
    r.removed = j.at("removed").get<std::map<std::string, std::size_t>>();
    r.identification_samples = j.value("identification_samples", std::size_t{0});
    r.rules_extracted = j.value("rules_extracted", std::size_t{0});
    r.rules_retained = j.value("rules_retained", std::size_t{0});
    if (!j.at("stop_reason").is_null()) r.stop_reason = stop_reason_from_string(j["stop_reason"].get<std::string>());
    r.network_fingerprint = std::stoull(j.at("network_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("report: ") + e.what());
  }
  return r;
}

MetricsRow evaluate(const Network& net, const DatasetSplit& data, const std::vector<std::string>& analyzed,
                    Aggregation aggregation, int latency_runs, int iteration) {
  if (data.test.empty()) throw Error(ErrorKind::Validation, "evaluation needs a non-empty test split");
  MetricsRow row;
  row.iteration = iteration;
  row.size = size_report(net.layers(), analyzed);

  const ActivationDataset acts = capture(net, data.test, SplitKind::Test, data.catalog, analyzed);
  std::vector<std::size_t> scope;
  for (std::size_t c : data.catalog.class_concept_indices()) {
    scope.push_back(*data.catalog.class_index(data.catalog.concepts[c].name));
  }
  if (scope.empty()) {
    for (std::size_t c = 0; c < data.catalog.classes.size(); ++c) scope.push_back(c);
  }
  std::vector<std::size_t> pred, truth;
  for (const auto& s : acts.samples) {
    pred.push_back(s.predicted_class);
    truth.push_back(s.true_class);
  }
  row.effectiveness = aggregation == Aggregation::Micro
                          ? effectiveness(confusion(pred, truth, scope))
                          : macro_effectiveness(per_concept_confusion(pred, truth, scope));
  if (latency_runs > 0) row.latency = benchmark_latency(net, data.test.front().features, latency_runs);
  return row;
}

std::vector<std::string> run_log_header(const std::vector<std::string>& analyzed) {
  auto h = metrics_header(analyzed);
  for (const auto& l : analyzed) h.push_back("removed_" + l);
  h.emplace_back("stop_reason");
  return h;
}

std::vector<std::string> run_log_fields(const IterationReport& report) {
  auto f = metrics_fields(report.metrics);
  for (const auto& [layer, _] : report.metrics.size.neurons) {
    const auto it = report.removed.find(layer);
    f.push_back(std::to_string(it == report.removed.end() ? 0 : it->second));
  }
  f.emplace_back(report.stop_reason ? to_string(*report.stop_reason) : "");
  return f;
}

void write_run_log(const fs::path& path, const std::vector<std::string>& analyzed,
                   const std::vector<IterationReport>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << join_csv(run_log_header(analyzed)) << '\n';
  for (const auto& r : rows) out << join_csv(run_log_fields(r)) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

fs::path iteration_dir(const fs::path& checkpoint_dir, int iteration) {
  return checkpoint_dir / ("iter_" + std::to_string(iteration));
}

namespace {

constexpr const char* kRunConfigFile = "run_config.json";
constexpr const char* kRunLogFile = "run.csv";

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> resolve_layers(const Network& net, const CbpConfig& config) {
  std::vector<std::string> layers = config.analyzed_layers.empty() ? default_analyzed_layers(net)
                                                                   : config.analyzed_layers;
  if (layers.empty()) throw Error(ErrorKind::Config, "no analyzed layers (none named and none flagged in the manifest)");
  for (const auto& name : layers) {
    const auto idx = net.find_layer(name);
    if (!idx) throw Error(ErrorKind::Config, "analyzed layer '" + name + "' is not in the network");
    if (net.layer(*idx).kind != LayerKind::Dense) {
      throw Error(ErrorKind::Config, "analyzed layer '" + name + "' must be a hidden dense layer");
    }
  }
  return layers;
}

void save_checkpoint(const fs::path& dir, const Network& net, const IterationReport& report,
                     const Identification* ident, const PruningPlan* plan) {
  fs::create_directories(dir);
  save_network(net, dir / "manifest.json", dir / "weights.bin");
  write_json_file(dir / "report.json", report_to_json(report));
  if (ident) write_rules_jsonl(dir / "rules.jsonl", ident->retained);
  if (plan) write_json_file(dir / "plan.json", plan_to_json(*plan));
}

class Loop {
 public:
  Loop(const DatasetSplit& data, const CbpConfig& config, std::vector<std::string> layers, const RunHooks& hooks)
      : data_(data), config_(config), layers_(std::move(layers)), hooks_(hooks) {}

  // Runs iterations start.. on `net`; `history` holds the rows already on disk.
  std::vector<IterationReport> go(Network& net, int start, std::vector<IterationReport> history) {
    std::vector<IterationReport> produced;
    for (int it = start;; ++it) {
      IterationReport report = step(net, it);
      if (!report.stop_reason && it >= config_.stopping.max_iterations) {
        report.stop_reason = StopReason::MaxIterations;
      }
      checkpoint(net, report);
      history.push_back(report);
      if (!config_.checkpoint_dir.empty()) write_run_log(config_.checkpoint_dir / kRunLogFile, layers_, history);
      produced.push_back(report);
      if (report.stop_reason) break;
      if (hooks_.on_iteration && !hooks_.on_iteration(report)) return produced;
    }
    if (hooks_.on_iteration) hooks_.on_iteration(produced.back());
    return produced;
  }

  IterationReport baseline(const Network& net) {
    IterationReport r;
    r.metrics = evaluate(net, data_, layers_, config_.aggregation, config_.latency_runs, 0);
    for (const auto& l : layers_) r.removed[l] = 0;
    r.network_fingerprint = net.fingerprint();
    last_ident_.reset();
    last_plan_.reset();
    return r;
  }

  void checkpoint(const Network& net, const IterationReport& report) {
    if (config_.checkpoint_dir.empty()) return;
    save_checkpoint(iteration_dir(config_.checkpoint_dir, report.iteration()), net, report,
                    last_ident_ ? &*last_ident_ : nullptr, last_plan_ ? &*last_plan_ : nullptr);
  }

 private:
  IterationReport step(Network& net, int iteration) {
    IterationReport report;
    for (const auto& l : layers_) report.removed[l] = 0;
    last_ident_.reset();
    last_plan_.reset();

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    double t_ident = 0;
    double t_prune = 0;
    try {
      const ActivationDataset acts = capture(net, data_.train, SplitKind::Train, data_.catalog, layers_);
      const ActivationDataset input = filter_for_identification(acts, config_.include_misclassified);
      report.identification_samples = input.size();
      last_ident_ = identify(input, net, config_.identifier_config(layers_));
      report.rules_extracted = last_ident_->rules.size();
      report.rules_retained = last_ident_->retained.size();
      t_ident = seconds_since(t0);

      const auto t1 = clock::now();
      last_plan_ = plan_from_keepset(last_ident_->keep, net, layers_, iteration,
                                     config_.identifier_config(layers_).effective_policy().to_string());
      if (!last_plan_->empty()) net = apply(net, *last_plan_);
      t_prune = seconds_since(t1);
      for (const auto& l : layers_) report.removed[l] = last_plan_->removed_from(l);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IdentificationInputEmpty) {
        report.stop_reason = StopReason::IdentificationInputEmpty;
      } else if (e.kind() == ErrorKind::WouldEmptyLayer) {
        report.stop_reason = StopReason::WouldEmptyLayer;
        last_plan_.reset();
      } else {
        throw;
      }
      if (t_ident == 0) t_ident = seconds_since(t0);
    }

    report.metrics = evaluate(net, data_, layers_, config_.aggregation, config_.latency_runs, iteration);
    report.metrics.t_identifier_s = t_ident;
    report.metrics.t_pruner_s = t_prune;
    report.metrics.t_total_s = t_ident + t_prune;
    report.network_fingerprint = net.fingerprint();

    if (!report.stop_reason) {
      const auto& s = config_.stopping;
      if (s.stop_on_no_progress && report.total_removed() == 0) {
        report.stop_reason = StopReason::NoProgress;
      } else if (s.target_params && report.metrics.size.params <= *s.target_params) {
        report.stop_reason = StopReason::TargetSize;
      } else if (s.min_accuracy && report.metrics.effectiveness.accuracy &&
                 *report.metrics.effectiveness.accuracy <= *s.min_accuracy) {
        report.stop_reason = StopReason::MinAccuracy;
      }
    }
    return report;
  }

  const DatasetSplit& data_;
  const CbpConfig& config_;
  std::vector<std::string> layers_;
  const RunHooks& hooks_;
  std::optional<Identification> last_ident_;
  std::optional<PruningPlan> last_plan_;
};

void check_inputs(const Network& net, const DatasetSplit& data) {
  data.catalog.validate_against(net.class_names());
  if (data.catalog.feature_dim != net.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "dataset feature_dim " + std::to_string(data.catalog.feature_dim) +
                                                  " does not match network input " + std::to_string(net.input_dim()));
  }
  if (data.train.empty()) throw Error(ErrorKind::Validation, "training split is empty");
  if (data.test.empty()) throw Error(ErrorKind::Validation, "test split is empty");
}

}  // namespace

RunResult run(const Network& net, const DatasetSplit& data, const CbpConfig& config, const RunHooks& hooks) {
  config.validate();
  check_inputs(net, data);
  const auto layers = resolve_layers(net, config);

  if (!config.checkpoint_dir.empty()) {
    fs::create_directories(config.checkpoint_dir);
    write_json_file(config.checkpoint_dir / kRunConfigFile,
                    {{"config", config.to_json()}, {"config_hash", hex64(config.hash())}, {"analyzed_layers", layers}});
  }

  Loop loop(data, config, layers, hooks);
  RunResult result{loop.baseline(net), {}, net};
  loop.checkpoint(net, result.baseline);
  Network current = net;
  result.reports = loop.go(current, 1, {result.baseline});
  result.final_network = std::move(current);
  return result;
}

RunResult resume(const DatasetSplit& data, const CbpConfig& config, const RunHooks& hooks) {
  config.validate();
  const fs::path& dir = config.checkpoint_dir;
  if (dir.empty()) throw Error(ErrorKind::Config, "resume needs a checkpoint directory");
  if (!fs::exists(dir / kRunConfigFile)) throw Error(ErrorKind::Io, "no run to resume in " + dir.string());
  const json stored = read_json_file(dir / kRunConfigFile);
  if (stored.at("config_hash").get<std::string>() != hex64(config.hash())) {
    throw Error(ErrorKind::Config, "config hash " + hex64(config.hash()) + " differs from the stored run (" +
                                       stored.at("config_hash").get<std::string>() + ")");
  }
  const auto layers = stored.at("analyzed_layers").get<std::vector<std::string>>();

  std::vector<IterationReport> history;
  for (int it = 0; fs::exists(iteration_dir(dir, it) / "report.json"); ++it) {
    history.push_back(report_from_json(read_json_file(iteration_dir(dir, it) / "report.json")));
  }
  if (history.empty()) throw Error(ErrorKind::Io, "no checkpoints in " + dir.string());

  const int last = history.back().iteration();
  Network net = load_network(iteration_dir(dir, last) / "manifest.json");
  if (net.fingerprint() != history.back().network_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch, "checkpoint " + iteration_dir(dir, last).string() +
                                                    " does not match its recorded fingerprint");
  }
  check_inputs(net, data);

  RunResult result{history.front(), {}, net};
  if (history.back().stop_reason) return result;
  Loop loop(data, config, layers, hooks);
  result.reports = loop.go(net, last + 1, std::move(history));
  result.final_network = std::move(net);
  return result;
}

}  // namespace cbp
