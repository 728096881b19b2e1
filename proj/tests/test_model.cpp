#include <gtest/gtest.h>

#include <random>

#include "cbp/error.hpp"
#include "cbp/model.hpp"
#include "cbp/model_io.hpp"
#include "cbp/pruner.hpp"
#include "test_support.hpp"

namespace cbp {
namespace {

using testing::kVggManifest;

// Spreadsheet-style oracle: prefix + sum out*(in+1) over the FC stack.
std::uint64_t vgg_params_oracle(std::uint64_t fc1, std::uint64_t fc2) {
  return 20'024'384ULL + fc1 * (25088 + 1) + fc2 * (fc1 + 1) + 1000 * (fc2 + 1);
}

Architecture vgg_shrunk(std::size_t fc1, std::size_t fc2) {
  Architecture arch = load_architecture(kVggManifest);
  arch[1].output_dim = fc1;
  arch[2].input_dim = fc1;
  arch[2].output_dim = fc2;
  arch[3].input_dim = fc2;
  return arch;
}

TEST(Accounting, Vgg19Baseline) {
  const Architecture arch = load_architecture(kVggManifest);
  EXPECT_EQ(param_count(arch), 143'667'240u);
  EXPECT_EQ(param_count(arch), vgg_params_oracle(4096, 4096));
  EXPECT_EQ(size_bytes(arch), 574'668'960u);
  EXPECT_NEAR(bytes_to_mb(size_bytes(arch)), 574.70, 574.70 * 0.001);
}

TEST(Accounting, Vgg19PrunedRows) {
  struct Row {
    std::size_t fc1, fc2;
    std::uint64_t params, mac1, mac2;
  };
  for (const Row& r : {Row{2622, 2357, 94'348'153, 65'780'736, 6'180'054},
                       Row{1241, 1088, 53'600'129, 31'134'208, 1'350'208},
                       Row{744, 676, 39'871'220, 18'665'472, 502'944}}) {
    const Architecture arch = vgg_shrunk(r.fc1, r.fc2);
    EXPECT_EQ(param_count(arch), r.params);
    EXPECT_EQ(param_count(arch), vgg_params_oracle(r.fc1, r.fc2));
    const MacCount macs = mac_count(arch);
    EXPECT_EQ(macs.per_layer[1], r.mac1);
    EXPECT_EQ(macs.per_layer[2], r.mac2);
    EXPECT_EQ(macs.per_layer[1], r.fc1 * 25088);
  }
}

TEST(Accounting, TrivialShapes) {
  const Architecture one{{LayerKind::Output, "out", 1, 1, 0, 0, false}};
  EXPECT_EQ(param_count(one), 2u);
  EXPECT_EQ(mac_count(one).total, 1u);
  EXPECT_EQ(size_bytes(Architecture{}), 0u);
}

TEST(Accounting, PrefixUsesDeclaredValues) {
  const Architecture arch = load_architecture(kVggManifest);
  const MacCount macs = mac_count(arch);
  EXPECT_EQ(macs.per_layer[0], 19'508'428'800u);
  EXPECT_EQ(macs.total, 19'508'428'800u + 4096u * 25088 + 4096u * 4096 + 1000u * 4096);
  EXPECT_EQ(layer_param_count(arch[0]), 20'024'384u);
}

TEST(Accounting, ParamDeltaMatchesFormulaForRandomPlans) {
  std::mt19937 rng(11);
  const Architecture base = testing::mlp_architecture({7, 12, 9, 4});
  for (int trial = 0; trial < 50; ++trial) {
    PruningPlan plan;
    std::size_t k1 = 0, k2 = 0;
    for (std::size_t n = 0; n < 12; ++n) {
      if (rng() % 3 == 0 && k1 < 11) plan.remove["fc1"].push_back(n), ++k1;
    }
    for (std::size_t n = 0; n < 9; ++n) {
      if (rng() % 3 == 0 && k2 < 8) plan.remove["fc2"].push_back(n), ++k2;
    }
    const Architecture after = cbp::apply(base, plan);
    // Removing k1 of fc1 drops k1*(in+1) rows plus k1 columns of fc2 (whose width is already 9-k2).
    const std::uint64_t expected_delta = k1 * (7 + 1) + k1 * (9 - k2) + k2 * (12 + 1) + k2 * 4;
    EXPECT_EQ(param_count(base) - param_count(after), expected_delta) << "trial " << trial;
  }
}

TEST(Architecture, RejectsShapeMismatchNamingLayer) {
  Architecture arch = testing::mlp_architecture({4, 3, 2});
  arch[1].input_dim = 5;
  try {
    validate_architecture(arch);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedModel);
    EXPECT_NE(std::string(e.what()).find("out"), std::string::npos);
  }
}

TEST(Architecture, OutputMustBeLast) {
  Architecture arch = testing::mlp_architecture({4, 3, 2});
  std::swap(arch[0].kind, arch[1].kind);
  EXPECT_THROW(validate_architecture(arch), Error);
}

TEST(Network, RejectsNonFiniteWeightWithIndex) {
  const Network net = testing::random_mlp({3, 2, 2}, 1);
  std::vector<DenseParams> params(net.all_params().begin(), net.all_params().end());
  params[0].weight[4] = std::numeric_limits<float>::quiet_NaN();
  try {
    Network bad(net.layers(), params, net.class_names());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
    EXPECT_NE(std::string(e.what()).find('4'), std::string::npos);
  }
}

TEST(Network, RejectsClassNameCountMismatch) {
  const Network net = testing::random_mlp({3, 2, 2}, 1);
  EXPECT_THROW(Network(net.layers(), {net.all_params().begin(), net.all_params().end()}, {"a"}), Error);
}

TEST(Network, FingerprintTracksWeights) {
  const Network a = testing::random_mlp({3, 4, 2}, 1);
  const Network b = testing::random_mlp({3, 4, 2}, 1);
  const Network c = testing::random_mlp({3, 4, 2}, 2);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  EXPECT_EQ(a, b);
}

TEST(Network, LayerIndexUnknownNameThrows) {
  const Network net = testing::random_mlp({3, 4, 2}, 1);
  EXPECT_EQ(net.layer_index("fc1"), 0u);
  EXPECT_THROW(net.layer_index("nope"), Error);
}

}  // namespace
}  // namespace cbp
