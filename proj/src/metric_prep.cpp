#include "changelens/metric_prep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "changelens/error.hpp"
#include "changelens/text.hpp"

namespace changelens {

std::string_view to_string(PatternClass p) {
  switch (p) {
    case PatternClass::SingleSpike: return "SingleSpike";
    case PatternClass::SingleDip: return "SingleDip";
    case PatternClass::LevelShiftUp: return "LevelShiftUp";
    case PatternClass::LevelShiftDown: return "LevelShiftDown";
    case PatternClass::SteadyIncrease: return "SteadyIncrease";
    case PatternClass::SteadyDecrease: return "SteadyDecrease";
    case PatternClass::TransientFluctuation: return "TransientFluctuation";
    case PatternClass::NoChange: return "NoChange";
  }
  return "NoChange";
}

std::optional<PatternClass> parse_pattern_class(std::string_view s) {
  for (auto p : kAllPatternClasses)
    if (to_string(p) == s) return p;
  return std::nullopt;
}

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(std::span<const double> v) {
  Moments m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

// Least-squares slope of v against its index.
double index_slope(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  const double xbar = (n - 1.0) / 2.0;
  const double ybar = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double dx = static_cast<double>(i) - xbar;
    num += dx * (v[i] - ybar);
    den += dx * dx;
  }
  return num / den;
}

}  // namespace

MetricSeries normalize(const MetricSeries& series) {
  MetricSeries out = series;
  const auto m = moments(series.values);
  // Guard against rounding noise on constant series (e.g. repeated 0.1).
  const double floor = 1e-12 * std::max(1.0, std::abs(m.mean));
  for (auto& v : out.values) v = m.sd <= floor ? 0.0 : (v - m.mean) / m.sd;
  return out;
}

PatternMatch classify_pattern(const MetricSeries& series, EpochSeconds change_time,
                              const PatternRuleConfig& rules) {
  PatternMatch none;
  const auto n = std::min(series.values.size(), series.timestamps.size());
  std::size_t split = 0;
  while (split < n && series.timestamps[split] < change_time) ++split;
  const std::span<const double> all(series.values.data(), n);
  const auto pre = all.first(split);
  const auto post = all.subspan(split);
  if (pre.size() < rules.min_points || post.size() < rules.min_points) return none;

  const auto [lo, hi] = std::minmax_element(all.begin(), all.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return none;

  const auto base = moments(pre);
  // A flat baseline makes any deviation infinitely many sigmas away; the
  // floor is relative to the series range so the rules stay scale-free.
  const bool degenerate = base.sd <= 1e-9 * range;
  const double scale = degenerate ? 1e-9 * range : base.sd;
  const double mag_scale = degenerate ? moments(all).sd : base.sd;
  const EpochSeconds post_start = series.timestamps[split];
  const EpochSeconds post_end = series.timestamps[n - 1];

  auto z = [&](double x) { return (x - base.mean) / scale; };

  // (1) lone outlier: the most extreme post point clears spike_z, its
  // neighbours do not, and the rest of the post segment shows no shift,
  // trend or variance change of its own.
  std::size_t at = 0;
  for (std::size_t i = 1; i < post.size(); ++i)
    if (std::abs(z(post[i])) > std::abs(z(post[at]))) at = i;
  if (std::abs(z(post[at])) >= rules.spike_z) {
    const double left = at == 0 ? pre.back() : post[at - 1];
    const bool left_ok = std::abs(z(left)) < rules.spike_z;
    const bool right_ok = at + 1 >= post.size() || std::abs(z(post[at + 1])) < rules.spike_z;
    std::vector<double> rest(post.begin(), post.end());
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(at));
    const auto rm = moments(rest);
    const bool calm = std::abs(rm.mean - base.mean) / scale < rules.shift_z &&
                      std::abs(index_slope(rest)) / scale < rules.slope_min && rm.sd / scale < rules.var_ratio;
    if (left_ok && right_ok && calm) {
      const double peak = post[at] - base.mean;
      const auto t = series.timestamps[split + at];
      return {peak > 0 ? PatternClass::SingleSpike : PatternClass::SingleDip, peak / mag_scale, {t, t}};
    }
  }

  const auto after = moments(post);
  const double slope = index_slope(post);
  const double shift = after.mean - base.mean;

  // (2) sustained step
  if (std::abs(shift) / scale >= rules.shift_z) {
    const std::size_t tail_n = std::max<std::size_t>(rules.min_points, post.size() / 4);
    const auto tail = post.last(std::min(tail_n, post.size()));
    const double tail_shift = moments(tail).mean - base.mean;
    const bool sustained = tail_shift * shift > 0 && std::abs(tail_shift) / scale >= rules.shift_z;
    const double rise = std::abs(slope) * static_cast<double>(post.size() - 1);
    const bool step_shaped = rise < rules.step_rise_fraction * std::abs(shift);
    if (sustained && step_shaped) {
      return {shift > 0 ? PatternClass::LevelShiftUp : PatternClass::LevelShiftDown, shift / mag_scale,
              {post_start, post_end}};
    }
  }

  // (3) trend
  if (std::abs(slope) / scale >= rules.slope_min) {
    return {slope > 0 ? PatternClass::SteadyIncrease : PatternClass::SteadyDecrease, slope / mag_scale,
            {post_start, post_end}};
  }

  // (4) variance burst
  if (after.sd / scale >= rules.var_ratio) {
    return {PatternClass::TransientFluctuation, after.sd / mag_scale, {post_start, post_end}};
  }
  return none;
}

std::string describe_finding(std::string_view source, PatternClass pattern, double magnitude) {
  return "Metric " + std::string(source) + " shows a " + std::string(to_string(pattern)) +
         " of magnitude " + format_sig4(magnitude) + " after the change.";
}

namespace {
std::optional<AnomalyFinding> to_finding(const MetricSeries& s, const PatternMatch& m) {
  if (m.pattern == PatternClass::NoChange) return std::nullopt;
  return AnomalyFinding{s.name, m.pattern, m.span.start, m.span.end, m.magnitude,
                        describe_finding(s.name, m.pattern, m.magnitude)};
}
}  // namespace

std::vector<AnomalyFinding> detect_findings_serial(const std::vector<MetricSeries>& series,
                                                   EpochSeconds change_time,
                                                   const PatternRuleConfig& rules) {
  std::vector<AnomalyFinding> out;
  for (const auto& s : series)
    if (auto f = to_finding(s, classify_pattern(s, change_time, rules))) out.push_back(std::move(*f));
  return out;
}

std::vector<AnomalyFinding> detect_findings(const std::vector<MetricSeries>& series,
                                            EpochSeconds change_time, const PatternRuleConfig& rules) {
  std::vector<PatternMatch> matches(series.size());
  const auto n = static_cast<long long>(series.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    matches[ui] = classify_pattern(series[ui], change_time, rules);
  }
  std::vector<AnomalyFinding> out;
  for (std::size_t i = 0; i < series.size(); ++i)
    if (auto f = to_finding(series[i], matches[i])) out.push_back(std::move(*f));
  return out;
}

namespace {

std::optional<WindowStats> stats_in(const MetricSeries& s, TimeSpan span) {
  std::optional<WindowStats> out;
  double sum = 0.0;
  std::size_t count = 0;
  const auto n = std::min(s.values.size(), s.timestamps.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (s.timestamps[i] < span.start || s.timestamps[i] >= span.end) continue;
    const double v = s.values[i];
    if (!out) out = WindowStats{v, v, 0.0};
    out->max = std::max(out->max, v);
    out->min = std::min(out->min, v);
    sum += v;
    ++count;
  }
  if (out) out->mean = sum / static_cast<double>(count);
  return out;
}

double relative_delta(double before, double after, double eps) {
  return (after - before) / std::max(std::abs(before), eps);
}

}  // namespace

bool WindowComparison::material(double threshold) const {
  return std::max({std::abs(delta_max), std::abs(delta_min), std::abs(delta_mean)}) >= threshold;
}

WindowComparison compare_windows(const MetricSeries& series, TimeSpan before, TimeSpan after,
                                 const PatternRuleConfig& rules) {
  const auto b = stats_in(series, before);
  const auto a = stats_in(series, after);
  if (!b) throw Error(ErrorCode::EmptyWindow, "compare_windows: no samples before for " + series.name);
  if (!a) throw Error(ErrorCode::EmptyWindow, "compare_windows: no samples after for " + series.name);

  WindowComparison c;
  c.source = series.name;
  c.unit = series.unit;
  c.before = *b;
  c.after = *a;
  c.delta_max = relative_delta(b->max, a->max, rules.epsilon);
  c.delta_min = relative_delta(b->min, a->min, rules.epsilon);
  c.delta_mean = relative_delta(b->mean, a->mean, rules.epsilon);

  if (!c.material(rules.material_change)) {
    c.summary = "Metric " + series.name + " shows no material change between the windows.";
    return c;
  }
  struct Stat {
    const char* name;
    double delta, from, to;
  };
  const Stat stats[] = {{"mean", c.delta_mean, b->mean, a->mean},
                        {"max", c.delta_max, b->max, a->max},
                        {"min", c.delta_min, b->min, a->min}};
  const Stat* top = &stats[0];
  for (const auto& s : stats)
    if (std::abs(s.delta) > std::abs(top->delta)) top = &s;
  c.summary = "Metric " + series.name + " " + top->name + (top->delta > 0 ? " rose by " : " fell by ") +
              format_sig4(std::abs(top->delta) * 100.0) + "% after the change (" + format_sig4(top->from) +
              " to " + format_sig4(top->to) + ").";
  return c;
}

}  // namespace changelens
