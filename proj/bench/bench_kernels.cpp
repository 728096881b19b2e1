// Serial reference vs OpenMP kernels on shapes resembling the analyzed layers.
#include <random>

#include <benchmark/benchmark.h>

#include "cbp/dataset.hpp"
#include "cbp/decision_tree.hpp"
#include "cbp/inference.hpp"
#include "cbp/kernels.hpp"

namespace {

std::vector<float> random_vector(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

template <bool Parallel>
void BM_DenseForward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto w = random_vector(rows * cols, 1);
  const auto b = random_vector(rows, 2);
  const auto x = random_vector(cols, 3);
  std::vector<float> y(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      cbp::kernels::dense_forward(w, b, x, y, true);
    } else {
      cbp::kernels::dense_forward_serial(w, b, x, y, true);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}
BENCHMARK(BM_DenseForward<false>)->Args({4096, 4096})->Args({4096, 25088})->Args({64, 32});
BENCHMARK(BM_DenseForward<true>)->Args({4096, 4096})->Args({4096, 25088})->Args({64, 32});

cbp::Network mlp(std::size_t in, std::size_t h1, std::size_t h2, std::size_t classes) {
  using cbp::LayerKind;
  cbp::Architecture arch{{LayerKind::Dense, "fc1", in, h1, 0, 0, true},
                         {LayerKind::Dense, "fc2", h1, h2, 0, 0, true},
                         {LayerKind::Output, "out", h2, classes, 0, 0, false}};
  std::vector<cbp::DenseParams> params;
  std::uint32_t seed = 10;
  for (const auto& l : arch) {
    params.push_back({random_vector(l.input_dim * l.output_dim, seed), random_vector(l.output_dim, seed + 1)});
    seed += 2;
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("class_" + std::to_string(k));
  return cbp::Network(arch, params, names);
}

template <bool Parallel>
void BM_Capture(benchmark::State& state) {
  cbp::SyntheticSpec spec;
  spec.num_classes = 4;
  const auto data = cbp::generate_synthetic(7, static_cast<std::size_t>(state.range(0)), 64, spec);
  const cbp::Network net = mlp(64, 256, 128, 4);
  for (auto _ : state) {
    auto acts = Parallel ? cbp::capture(net, data.train, cbp::SplitKind::Train, data.catalog)
                         : cbp::capture_serial(net, data.train, cbp::SplitKind::Train, data.catalog);
    benchmark::DoNotOptimize(acts.samples.data());
  }
}
BENCHMARK(BM_Capture<false>)->Arg(4000);
BENCHMARK(BM_Capture<true>)->Arg(4000);

template <bool Parallel>
void BM_BestSplit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  cbp::LayerActivations acts{"fc1", width, random_vector(n * width, 5)};
  std::vector<std::uint8_t> labels(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = acts.at(i, 0) + acts.at(i, 1) > 0.0f ? 1 : 0;
    rows[i] = i;
  }
  for (auto _ : state) {
    auto best = Parallel ? cbp::find_best_split(acts, rows, labels, 1) : cbp::find_best_split_serial(acts, rows, labels, 1);
    benchmark::DoNotOptimize(best);
  }
}
BENCHMARK(BM_BestSplit<false>)->Args({2000, 256});
BENCHMARK(BM_BestSplit<true>)->Args({2000, 256});

}  // namespace

BENCHMARK_MAIN();
