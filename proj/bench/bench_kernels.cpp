#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "changelens/kernels.hpp"
#include "changelens/metric_prep.hpp"
#include "changelens/rng.hpp"

using namespace changelens;

namespace {

std::vector<double> random_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  DeterministicRng rng(seed);
  std::vector<double> m(rows * dim);
  for (auto& x : m) x = rng.normal(0.0, 1.0);
  return m;
}

void cosine_scan(benchmark::State& state, bool parallel) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 1024;
  const auto data = random_matrix(rows, dim, 1);
  const auto query = random_matrix(1, dim, 2);
  const kernels::MatrixView view{data, rows, dim};
  for (auto _ : state) {
    auto s = parallel ? kernels::cosine_scores_parallel(query, view) : kernels::cosine_scores_serial(query, view);
    benchmark::DoNotOptimize(s.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}

void greedy_match(benchmark::State& state, bool parallel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 256;
  const auto a = random_matrix(n, dim, 3);
  const auto b = random_matrix(n, dim, 4);
  const kernels::MatrixView va{a, n, dim};
  const kernels::MatrixView vb{b, n, dim};
  for (auto _ : state) {
    auto g = parallel ? kernels::greedy_maxima_parallel(va, vb) : kernels::greedy_maxima_serial(va, vb);
    benchmark::DoNotOptimize(g.row_max.data());
  }
}

void pattern_rules(benchmark::State& state, bool parallel) {
  const auto n_series = static_cast<std::size_t>(state.range(0));
  DeterministicRng rng(5);
  std::vector<MetricSeries> series(n_series);
  for (std::size_t i = 0; i < n_series; ++i) {
    series[i].name = "m" + std::to_string(i);
    for (int t = 0; t < 240; ++t) {
      series[i].timestamps.push_back(1'700'000'000 + 60 * t);
      series[i].values.push_back(rng.normal(0.0, 1.0) + (t >= 120 && i % 3 == 0 ? 8.0 : 0.0));
    }
  }
  const EpochSeconds change = 1'700'000'000 + 60 * 120;
  const PatternRuleConfig rules;
  for (auto _ : state) {
    auto f = parallel ? detect_findings(series, change, rules) : detect_findings_serial(series, change, rules);
    benchmark::DoNotOptimize(f.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(cosine_scan, serial, false)->Arg(1000)->Arg(10000);
BENCHMARK_CAPTURE(cosine_scan, parallel, true)->Arg(1000)->Arg(10000);
BENCHMARK_CAPTURE(greedy_match, serial, false)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(greedy_match, parallel, true)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(pattern_rules, serial, false)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(pattern_rules, parallel, true)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
