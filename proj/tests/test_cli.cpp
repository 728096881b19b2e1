#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cbp/binary_io.hpp"
#include "cbp/cli.hpp"
#include "cbp/driver.hpp"
#include "cbp/model_io.hpp"
#include "test_support.hpp"

namespace cbp {
namespace {

using testing::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

const std::string kModel = testing::kDeskModel.string();
const std::string kData = testing::kDeskData.string();

TEST(Cli, GenerateIsDeterministic) {
  TempDir dir("gen");
  for (const char* sub : {"a", "b"}) {
    const auto r = cli({"generate", "--seed", "1", "--n", "2000", "--dim", "32", "--out", (dir / sub).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"features.bin", "labels.csv", "catalog.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Cli, GenerateBelowMinimumIsConfigError) {
  TempDir dir("gen5");
  EXPECT_EQ(cli({"generate", "--n", "5", "--out", dir.path().string()}).code, 2);
}

TEST(Cli, GeneratedFixtureEvaluates) {
  TempDir dir("geneval");
  ASSERT_EQ(cli({"generate", "--seed", "3", "--n", "60", "--dim", "5", "--out", (dir / "data").string()}).code, 0);
  save_network(testing::random_mlp({5, 7, 2}, 3), dir / "m.json", dir / "w.bin");
  const auto r = cli({"eval", "--model", (dir / "m.json").string(), "--data", (dir / "data").string(),
                      "--latency-runs", "0"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 2u);
}

TEST(Cli, HelpDocumentsEveryFlag) {
  auto top = cli({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"generate", "prune", "eval", "report"}) EXPECT_NE(top.out.find(sub), std::string::npos);
  const auto prune = cli({"prune", "--help"});
  EXPECT_EQ(prune.code, 0);
  for (const char* flag : {"--config", "--model", "--weights", "--data", "--identifier", "--policy",
                           "--include-misclassified", "--max-iters", "--target-params", "--min-accuracy",
                           "--latency-runs", "--out", "--resume"}) {
    EXPECT_NE(prune.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_EQ(cli({"report", "--help"}).code, 0);
}

TEST(Cli, UnknownFlagIsParseError) {
  EXPECT_EQ(cli({"prune", "--frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
}

TEST(Cli, DemoConfigRunMatchesCheckpoints) {
  TempDir dir("demo");
  const auto r = cli({"prune", "--config", CBP_DEMO_CONFIG, "--model", kModel, "--data", kData, "--latency-runs",
                      "0", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("iteration 1:"), std::string::npos);
  EXPECT_NE(r.out.find("stop=NoProgress"), std::string::npos);
  const auto rows = lines_of(slurp(dir / "run.csv"));
  std::size_t checkpoints = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    checkpoints += e.is_directory() && e.path().filename().string().rfind("iter_", 0) == 0;
  }
  EXPECT_GE(rows.size(), 3u);
  EXPECT_EQ(rows.size() - 1, checkpoints);

  const auto manifest = read_json_file(dir / "run_manifest.json");
  EXPECT_EQ(manifest.at("version"), cli::kVersion);
  const CbpConfig resolved = CbpConfig::from_json(manifest.at("config"));
  EXPECT_EQ(manifest.at("config_hash"), hex64(resolved.hash()));
  EXPECT_EQ(resolved.latency_runs, 0);  // the flag overrides the file
}

TEST(Cli, IdentifierAndPolicyFlagsParse) {
  TempDir dir("efga");
  const auto r = cli({"prune", "--model", kModel, "--data", kData, "--identifier", "efga", "--policy", "rec:95",
                      "--max-iters", "1", "--latency-runs", "0", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const CbpConfig c = CbpConfig::from_json(read_json_file(dir / "run_manifest.json").at("config"));
  EXPECT_EQ(c.mode, IdentifierMode::Efga);
  EXPECT_EQ(c.policy, AggregationPolicy::rec(95));
  EXPECT_NE(r.out.find("stop=MaxIterations"), std::string::npos);
}

TEST(Cli, BadPolicyIsConfigError) {
  TempDir dir("badpol");
  const auto r = cli({"prune", "--model", kModel, "--data", kData, "--identifier", "efga", "--policy", "top:0",
                      "--out", dir.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(cli({"prune", "--model", kModel, "--data", kData, "--identifier", "xga", "--out",
                 dir.path().string()}).code, 2);
}

TEST(Cli, MissingWeightsIsIoErrorWithPath) {
  TempDir dir("nowts");
  const auto missing = (dir / "absent.bin").string();
  const auto r = cli({"prune", "--model", kModel, "--weights", missing, "--data", kData, "--out",
                      (dir / "run").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(Cli, WouldEmptyLayerStillExitsZero) {
  TempDir dir("dead");
  const Network net = load_network(testing::kDeskModel);
  std::vector<DenseParams> params(net.all_params().begin(), net.all_params().end());
  std::fill(params[1].weight.begin(), params[1].weight.end(), 0.0f);
  std::fill(params[1].bias.begin(), params[1].bias.end(), -1.0f);
  save_network(Network(net.layers(), params, net.class_names()), dir / "m.json", dir / "w.bin");
  const auto r = cli({"prune", "--model", (dir / "m.json").string(), "--data", kData, "--latency-runs", "0",
                      "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("stop=WouldEmptyLayer"), std::string::npos) << r.out;
}

TEST(Cli, ResumeFinishedRunIsEmptyContinuation) {
  TempDir dir("resume");
  const std::vector<std::string> base{"prune", "--model", kModel, "--data", kData, "--latency-runs", "0",
                                      "--out", dir.path().string()};
  ASSERT_EQ(cli(base).code, 0);
  auto again = base;
  again.push_back("--resume");
  const auto r = cli(again);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("nothing to resume"), std::string::npos);
  auto altered = again;
  altered.insert(altered.end(), {"--max-iters", "7"});
  EXPECT_EQ(cli(altered).code, 2);
}

TEST(Cli, EvalUnprunedRowHasFullWidths) {
  const auto r = cli({"eval", "--model", kModel, "--data", kData, "--latency-runs", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 2u);
  const auto header = split_csv(lines[0]);
  const auto row = split_csv(lines[1]);
  ASSERT_EQ(header.size(), row.size());
  EXPECT_EQ(header[1], "fc1");
  EXPECT_EQ(row[1], "64");
  EXPECT_EQ(row[2], "32");
  EXPECT_EQ(row[3 + 3], "93.00");  // precision: classification accuracy of the fixture
}

TEST(Cli, EvalMatchesDriverRow) {
  TempDir dir("evalrow");
  ASSERT_EQ(cli({"prune", "--model", kModel, "--data", kData, "--latency-runs", "0", "--out", dir.path().string()})
                .code,
            0);
  const auto run_rows = lines_of(slurp(dir / "run.csv"));
  const auto header = split_csv(run_rows[0]);
  const auto in_run = split_csv(run_rows[1 + 1]);
  const auto r = cli({"eval", "--model", (iteration_dir(dir.path(), 1) / "manifest.json").string(), "--data", kData,
                      "--iteration", "1", "--latency-runs", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto row = split_csv(lines_of(r.out)[1]);
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!is_timing_column(header[i])) EXPECT_EQ(row[i], in_run[i]) << header[i];
  }
}

TEST(Cli, ReportSelectsEveryKthRow) {
  TempDir dir("report");
  {
    std::ofstream csv(dir / "run.csv");
    csv << "iteration,fc1,params_m,size_mb,accuracy,precision\n";
    for (int it = 0; it <= 70; ++it) csv << it << ',' << 100 - it << ",1.00,4.00,90.00,80.00\n";
  }
  const auto r = cli({"report", (dir / "run.csv").string(), "--every", "10", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = lines_of(slurp(dir / "out" / "table.csv"));
  std::vector<std::string> iterations;
  for (std::size_t i = 1; i < table.size(); ++i) iterations.push_back(split_csv(table[i])[0]);
  EXPECT_EQ(iterations, (std::vector<std::string>{"0", "1", "10", "20", "30", "40", "50", "60", "70"}));
  const auto series = lines_of(slurp(dir / "out" / "series_params.csv"));
  EXPECT_EQ(series[0], "iteration,params_m");
  EXPECT_EQ(series.size(), 72u);
  EXPECT_EQ(lines_of(slurp(dir / "out" / "series_accuracy.csv"))[0], "iteration,accuracy");
}

TEST(Cli, ReportKeepsLastRowOffTheGrid) {
  TempDir dir("report_last");
  {
    std::ofstream csv(dir / "run.csv");
    csv << "iteration,params_m,size_mb,accuracy,precision\n";
    for (int it = 0; it <= 23; ++it) csv << it << ",1.00,4.00,90.00,80.00\n";
  }
  ASSERT_EQ(cli({"report", (dir / "run.csv").string(), "--out", (dir / "o").string()}).code, 0);
  const auto table = lines_of(slurp(dir / "o" / "table.csv"));
  EXPECT_EQ(split_csv(table.back())[0], "23");
  EXPECT_EQ(table.size(), 1u + 5u);  // 0, 1, 10, 20, 23
}

TEST(Cli, ReportOnEmptyCsvIsConfigError) {
  TempDir dir("report_empty");
  std::ofstream(dir / "run.csv") << "";
  EXPECT_EQ(cli({"report", (dir / "run.csv").string()}).code, 2);
  std::ofstream(dir / "header.csv") << "iteration,params_m\n";
  EXPECT_EQ(cli({"report", (dir / "header.csv").string()}).code, 2);
}

TEST(Cli, EvalOnVgg19AccountingRow) {
  // Weights are irrelevant to accounting, so a zero network stands in for random ones.
  const Architecture arch = load_architecture(testing::kVggManifest);
  const Network net = Network::zeros(arch, load_class_names(testing::kVggManifest));
  DatasetSplit data;
  data.catalog.feature_dim = 25088;
  data.catalog.classes = net.class_names();
  for (const auto& c : data.catalog.classes) data.catalog.concepts.push_back({c, ConceptKind::Class});
  for (std::size_t i = 0; i < 2; ++i) {
    LabeledSample s{"v" + std::to_string(i), std::vector<float>(25088, 0.5f), i, std::vector<std::uint8_t>(1000, 0)};
    s.concept_flags[i] = 1;
    data.test.push_back(s);
  }
  const MetricsRow row = evaluate(net, data, {"fc1", "fc2"}, Aggregation::Micro, 0);
  const auto header = metrics_header(std::vector<std::string>{"fc1", "fc2"});
  const auto fields = metrics_fields(row);
  EXPECT_EQ(fields[std::find(header.begin(), header.end(), "params_m") - header.begin()], "143.67");
  EXPECT_NEAR(row.size.size_mb, 574.70, 574.70 * 0.001);
  EXPECT_EQ(fields[1], "4096");
}

}  // namespace
}  // namespace cbp
