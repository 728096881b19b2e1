#include "cbp/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbp/binary_io.hpp"
#include "cbp/dataset.hpp"
#include "cbp/driver.hpp"
#include "cbp/error.hpp"
#include "cbp/model_io.hpp"

namespace cbp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct GenerateOptions {
  std::uint64_t seed = 1;
  std::size_t n = 2000;
  std::size_t dim = 32;
  SyntheticSpec spec;
  std::string out;
};

struct PruneOptions {
  std::string config;
  std::string model;
  std::string weights;
  std::string data;
  std::string identifier;
  std::string policy;
  bool include_misclassified = false;
  std::optional<int> max_iters;
  std::optional<std::uint64_t> target_params;
  std::optional<double> min_accuracy;
  std::optional<int> latency_runs;
  std::string out;
  bool resume = false;
};

struct EvalOptions {
  std::string model;
  std::string weights;
  std::string data;
  std::vector<std::string> layers;
  int iteration = 0;
  int latency_runs = 100;
  std::string aggregation = "micro";
  std::string out;
};

struct ReportOptions {
  std::string run_csv;
  int every = 10;
  std::string out;
};

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  const DatasetSplit split = generate_synthetic(o.seed, o.n, o.dim, o.spec);
  fs::create_directories(o.out);
  save_dataset(split, DatasetFiles::in(o.out));
  out << "wrote " << split.train.size() << " train and " << split.test.size() << " test samples to " << o.out
      << '\n';
  return kOk;
}

CbpConfig resolve_config(const PruneOptions& o) {
  CbpConfig config = o.config.empty() ? CbpConfig{} : CbpConfig::from_json(read_json_file(o.config));
  if (!o.identifier.empty()) {
    if (o.identifier != "fga" && o.identifier != "efga") {
      throw Error(ErrorKind::Config, "--identifier must be fga or efga");
    }
    config.mode = o.identifier == "fga" ? IdentifierMode::Fga : IdentifierMode::Efga;
  }
  if (!o.policy.empty()) config.policy = AggregationPolicy::parse(o.policy);
  if (o.include_misclassified) config.include_misclassified = true;
  if (o.max_iters) config.stopping.max_iterations = *o.max_iters;
  if (o.target_params) config.stopping.target_params = *o.target_params;
  if (o.min_accuracy) config.stopping.min_accuracy = *o.min_accuracy;
  if (o.latency_runs) config.latency_runs = *o.latency_runs;
  if (!o.out.empty()) config.checkpoint_dir = o.out;
  if (config.checkpoint_dir.empty()) throw Error(ErrorKind::Config, "an output directory is required (--out)");
  config.validate();
  return config;
}

void print_iteration(std::ostream& out, const IterationReport& r) {
  out << "iteration " << r.iteration() << ":";
  for (const auto& [layer, n] : r.metrics.size.neurons) out << ' ' << layer << '=' << n;
  out << " params=" << r.metrics.size.params << " removed=" << r.total_removed()
      << " accuracy=" << format_optional(r.metrics.effectiveness.accuracy, 4)
      << " precision=" << format_optional(r.metrics.effectiveness.precision, 4);
  if (r.stop_reason) out << " stop=" << to_string(*r.stop_reason);
  out << '\n';
}

int cmd_prune(const PruneOptions& o, std::ostream& out) {
  const CbpConfig config = resolve_config(o);
  const DatasetSplit data = load_dataset(DatasetFiles::in(o.data));
  RunHooks hooks;
  hooks.on_iteration = [&](const IterationReport& r) {
    print_iteration(out, r);
    return true;
  };

  const fs::path dir = config.checkpoint_dir;
  fs::create_directories(dir);
  json manifest{{"version", kVersion},
                {"config", config.to_json()},
                {"config_hash", hex64(config.hash())},
                {"inputs",
                 {{"model", fs::absolute(o.model).string()},
                  {"weights", o.weights.empty() ? std::string{} : fs::absolute(o.weights).string()},
                  {"data", fs::absolute(o.data).string()}}}};

  RunResult result = [&] {
    if (o.resume) return resume(data, config, hooks);
    const Network net = load_network(o.model, o.weights);
    manifest["network_fingerprint"] = hex64(net.fingerprint());
    write_json_file(dir / "run_manifest.json", manifest);
    return run(net, data, config, hooks);
  }();
  if (result.reports.empty()) out << "run already finished; nothing to resume\n";
  out << "final params " << param_count(result.final_network) << "; checkpoints in " << dir.string() << '\n';
  return kOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const Network net = load_network(o.model, o.weights);
  const DatasetSplit data = load_dataset(DatasetFiles::in(o.data));
  data.catalog.validate_against(net.class_names());
  if (o.aggregation != "micro" && o.aggregation != "macro") {
    throw Error(ErrorKind::Config, "--aggregation must be micro or macro");
  }
  if (o.latency_runs != 0 && o.latency_runs < 2) throw Error(ErrorKind::Config, "--latency-runs must be 0 or >= 2");
  std::vector<std::string> layers = o.layers.empty() ? default_analyzed_layers(net) : o.layers;
  const MetricsRow row = evaluate(net, data, layers, o.aggregation == "micro" ? Aggregation::Micro : Aggregation::Macro,
                                  o.latency_runs, o.iteration);
  const std::string text = join_csv(metrics_header(layers)) + "\n" + join_csv(metrics_fields(row)) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    std::ofstream f(o.out, std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot open " + o.out + " for writing");
    f << text;
  }
  return kOk;
}

int cmd_report(const ReportOptions& o, std::ostream& out) {
  if (o.every < 1) throw Error(ErrorKind::Config, "--every must be at least 1");
  std::ifstream in(o.run_csv);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + o.run_csv);
  std::string line;
  std::vector<std::string> header;
  if (std::getline(in, line)) header = split_csv(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv(line));
    if (rows.back().size() != header.size()) {
      throw Error(ErrorKind::Validation, o.run_csv + ": row " + std::to_string(rows.size()) + " has " +
                                             std::to_string(rows.back().size()) + " fields, header has " +
                                             std::to_string(header.size()));
    }
  }
  if (header.empty() || rows.empty()) throw Error(ErrorKind::Config, o.run_csv + ": no iterations to report");
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::Validation, o.run_csv + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t it_col = column("iteration");

  std::vector<std::size_t> picked;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int it = std::stoi(rows[r][it_col]);
    if (it == 0 || it == 1 || it % o.every == 0 || r + 1 == rows.size()) picked.push_back(r);
  }

  const fs::path dir = o.out.empty() ? fs::path(o.run_csv).parent_path() / "report" : fs::path(o.out);
  fs::create_directories(dir);
  {
    std::ofstream table(dir / "table.csv", std::ios::trunc);
    table << join_csv(header) << '\n';
    for (std::size_t r : picked) table << join_csv(rows[r]) << '\n';
    if (!table) throw Error(ErrorKind::Io, "failed writing " + (dir / "table.csv").string());
  }
  for (const auto& [name, col] : {std::pair{"params", "params_m"}, std::pair{"accuracy", "accuracy"},
                                  std::pair{"size_mb", "size_mb"}, std::pair{"precision", "precision"}}) {
    const std::size_t c = column(col);
    std::ofstream series(dir / (std::string("series_") + name + ".csv"), std::ios::trunc);
    series << "iteration," << col << '\n';
    for (const auto& row : rows) series << row[it_col] << ',' << row[c] << '\n';
  }
  out << join_csv(header) << '\n';
  for (std::size_t r : picked) out << join_csv(rows[r]) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept-based pruning of feed-forward networks", "cbp"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic concept-labelled dataset");
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--n", gen.n, "Number of samples (at least 10)")->capture_default_str();
  g->add_option("--dim", gen.dim, "Feature dimension")->capture_default_str();
  g->add_option("--classes", gen.spec.num_classes, "Number of classes")->capture_default_str();
  g->add_option("--features", gen.spec.num_features, "Number of feature concepts")->capture_default_str();
  g->add_option("--test-fraction", gen.spec.test_fraction, "Share of samples in the test split")->capture_default_str();
  g->add_option("--separation", gen.spec.class_separation, "Distance of class centres from the origin")
      ->capture_default_str();
  g->add_option("--feature-strength", gen.spec.feature_strength, "Shift applied by a present feature concept")
      ->capture_default_str();
  g->add_option("--noise", gen.spec.noise, "Per-coordinate Gaussian noise")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  PruneOptions pr;
  auto* p = app.add_subcommand("prune", "Run iterative concept-based pruning");
  p->add_option("--config", pr.config, "JSON config file (flags override it)");
  p->add_option("--model", pr.model, "Model manifest")->required();
  p->add_option("--weights", pr.weights, "Weights blob (default: the manifest's reference)");
  p->add_option("--data", pr.data, "Dataset directory (features.bin, labels.csv, catalog.json)")->required();
  p->add_option("--identifier", pr.identifier, "Neuron identifier: fga or efga");
  p->add_option("--policy", pr.policy, "Rule aggregation: all, top:N, rec:X or avg");
  p->add_flag("--include-misclassified", pr.include_misclassified, "Use misclassified samples for identification");
  p->add_option("--max-iters", pr.max_iters, "Maximum number of iterations");
  p->add_option("--target-params", pr.target_params, "Stop once the parameter count is at most this");
  p->add_option("--min-accuracy", pr.min_accuracy, "Stop once accuracy drops to this value (0-1)");
  p->add_option("--latency-runs", pr.latency_runs, "Timed forward passes per iteration (0 disables)");
  p->add_option("--out", pr.out, "Checkpoint directory");
  p->add_flag("--resume", pr.resume, "Continue the run stored in --out");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Emit one metrics row for a model on a dataset's test split");
  e->add_option("--model", ev.model, "Model manifest")->required();
  e->add_option("--weights", ev.weights, "Weights blob (default: the manifest's reference)");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--layers", ev.layers, "Layers to report (default: analyzed layers)")->delimiter(',');
  e->add_option("--iteration", ev.iteration, "Iteration number written in the row")->capture_default_str();
  e->add_option("--latency-runs", ev.latency_runs, "Timed forward passes (0 disables)")->capture_default_str();
  e->add_option("--aggregation", ev.aggregation, "micro or macro")->capture_default_str();
  e->add_option("--out", ev.out, "Write the CSV here instead of stdout");

  ReportOptions rep;
  auto* r = app.add_subcommand("report", "Downsample a run log into a table and plot series");
  r->add_option("run", rep.run_csv, "run.csv produced by prune")->required();
  r->add_option("--every", rep.every, "Keep every K-th iteration (plus baseline, first and last)")
      ->capture_default_str();
  r->add_option("--out", rep.out, "Output directory (default: <run dir>/report)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& ex) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& ex) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kConfig;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*p) return cmd_prune(pr, out);
    if (*e) return cmd_eval(ev, out);
    if (*r) return cmd_report(rep, out);
  } catch (const Error& ex) {
    err << "error (" << to_string(ex.kind()) << "): " << ex.what() << '\n';
    return ex.kind() == ErrorKind::Config ? kConfig : kIoOrValidation;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kIoOrValidation;
  }
  return kConfig;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace cbp::cli
