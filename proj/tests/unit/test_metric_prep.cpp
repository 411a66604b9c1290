#include <doctest.h>

#include "changelens/error.hpp"
#include "changelens/metric_prep.hpp"
#include "oracles.hpp"

using namespace changelens;

namespace {
MetricSeries series_of(std::vector<double> values, EpochSeconds t0 = 0, EpochSeconds step = 60) {
  MetricSeries s;
  s.name = "cpu";
  s.unit = "%";
  for (std::size_t i = 0; i < values.size(); ++i) s.timestamps.push_back(t0 + static_cast<EpochSeconds>(i) * step);
  s.values = std::move(values);
  return s;
}
}  // namespace

TEST_SUITE("metric_prep") {
  TEST_CASE("z-score fixtures") {
    const auto z = normalize(series_of({1, 2, 3}));
    CHECK(z.values[0] == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(z.values[1] == doctest::Approx(0.0));
    CHECK(z.values[2] == doctest::Approx(1.2247).epsilon(1e-4));
    CHECK(normalize(series_of({5, 5, 5})).values == std::vector<double>{0, 0, 0});
    CHECK(normalize(series_of({7})).values == std::vector<double>{0});
    CHECK(normalize(series_of({0.1, 0.1, 0.1})).values == std::vector<double>{0, 0, 0});
  }

  TEST_CASE("normalize is idempotent on a normalized series") {
    const auto once = normalize(series_of({3, 9, 4, 1, 7}));
    const auto twice = normalize(once);
    for (std::size_t i = 0; i < once.values.size(); ++i) CHECK(twice.values[i] == doctest::Approx(once.values[i]));
  }

  TEST_CASE("ramp after a flat baseline is a steady increase") {
    std::vector<double> v(100, 0.0);
    for (int i = 0; i < 100; ++i) v.push_back(i);
    const auto s = series_of(v);
    CHECK(classify_pattern(s, s.timestamps[100]).pattern == PatternClass::SteadyIncrease);
  }

  TEST_CASE("one point at mean plus ten sigma is a single spike") {
    DeterministicRng rng(4);
    std::vector<double> v;
    for (int i = 0; i < 40; ++i) v.push_back(50.0 + (rng.uniform() - 0.5));
    const auto base = series_of(v);
    double mean = 0, sd = 0;
    for (int i = 0; i < 20; ++i) mean += v[i] / 20;
    for (int i = 0; i < 20; ++i) sd += (v[i] - mean) * (v[i] - mean) / 20;
    sd = std::sqrt(sd);
    auto spiked = base;
    spiked.values[30] = mean + 10 * sd;
    const auto m = classify_pattern(spiked, spiked.timestamps[20]);
    CHECK(m.pattern == PatternClass::SingleSpike);
    CHECK(m.span.start == spiked.timestamps[30]);
  }

  TEST_CASE("identical flat segments show no change") {
    const auto s = series_of(std::vector<double>(20, 3.0));
    CHECK(classify_pattern(s, s.timestamps[10]).pattern == PatternClass::NoChange);
  }

  TEST_CASE("too few points on a side is no change") {
    const auto s = series_of({1, 1, 9, 9, 9, 9});
    CHECK(classify_pattern(s, s.timestamps[2]).pattern == PatternClass::NoChange);
  }

  TEST_CASE("labeled shapes and rescaling") {
    const auto suite = oracle::shape_suite(77);
    std::size_t correct = 0;
    for (const auto& s : suite) correct += classify_pattern(s.series, s.change_time).pattern == s.label;
    CHECK(static_cast<double>(correct) / suite.size() >= 0.95);
    DeterministicRng rng(8);
    for (int i = 0; i < 50; ++i) {
      const auto s = oracle::labeled_shape(rng, kAllPatternClasses[rng.below(8)]);
      auto scaled = s.series;
      for (auto& v : scaled.values) v = 250.0 * v - 3000.0;
      CHECK(classify_pattern(scaled, s.change_time).pattern == classify_pattern(s.series, s.change_time).pattern);
    }
  }

  TEST_CASE("serial and parallel detection agree") {
    std::vector<MetricSeries> all;
    for (const auto& s : oracle::shape_suite(5)) all.push_back(s.series);
    const auto t = oracle::shape_suite(5)[0].change_time;
    CHECK(detect_findings(all, t, {}) == detect_findings_serial(all, t, {}));
    for (const auto& f : detect_findings_serial(all, t, {})) {
      CHECK(f.pattern != PatternClass::NoChange);
      CHECK_FALSE(f.description.empty());
    }
  }

  TEST_CASE("window comparison arithmetic") {
    const auto s = series_of({10, 10, 20, 20}, 0, 10);
    const auto c = compare_windows(s, {0, 20}, {20, 40});
    CHECK(c.before.mean == 10.0);
    CHECK(c.after.mean == 20.0);
    CHECK(c.delta_mean == doctest::Approx(1.0));
    CHECK(c.summary.find("rose") != std::string::npos);

    const auto same = compare_windows(series_of({4, 4, 4, 4}, 0, 10), {0, 20}, {20, 40});
    CHECK(same.delta_max == 0.0);
    CHECK(same.delta_min == 0.0);
    CHECK(same.delta_mean == 0.0);
    CHECK(same.summary.find("no material change") != std::string::npos);

    try {
      compare_windows(s, {0, 20}, {100, 200});
      FAIL("expected EmptyWindow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyWindow);
    }
  }

  TEST_CASE("mean delta antisymmetry on nonzero windows") {
    const auto s = series_of({8, 12, 30, 34}, 0, 10);
    const auto ab = compare_windows(s, {0, 20}, {20, 40});
    const auto ba = compare_windows(s, {20, 40}, {0, 20});
    CHECK(ab.delta_mean == doctest::Approx(-ba.delta_mean * (ba.before.mean / ab.before.mean)));
  }

  TEST_CASE("finding description wording is stable") {
    CHECK(describe_finding("cpu", PatternClass::SingleSpike, 12.5) ==
          "Metric cpu shows a SingleSpike of magnitude 12.5 after the change.");
  }
}
