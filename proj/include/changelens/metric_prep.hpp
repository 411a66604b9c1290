#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "changelens/log_miner.hpp"
#include "changelens/types.hpp"

namespace changelens {

enum class PatternClass {
  SingleSpike,
  SingleDip,
  LevelShiftUp,
  LevelShiftDown,
  SteadyIncrease,
  SteadyDecrease,
  TransientFluctuation,
  NoChange,
};

inline constexpr PatternClass kAllPatternClasses[] = {
    PatternClass::SingleSpike,    PatternClass::SingleDip,      PatternClass::LevelShiftUp,
    PatternClass::LevelShiftDown, PatternClass::SteadyIncrease, PatternClass::SteadyDecrease,
    PatternClass::TransientFluctuation, PatternClass::NoChange,
};

std::string_view to_string(PatternClass p);
std::optional<PatternClass> parse_pattern_class(std::string_view s);

// Thresholds for the ordered shape rules. All statistics are measured in
// units of the pre-change standard deviation, which keeps the classifier
// invariant under affine rescaling of the series.
struct PatternRuleConfig {
  double spike_z = 3.0;          // |z| of the lone outlier
  double shift_z = 3.0;          // mean shift, baseline sigmas
  double slope_min = 0.5;        // baseline sigmas per sample interval
  double var_ratio = 2.0;        // post sigma / pre sigma
  double step_rise_fraction = 0.5;  // a shift's in-segment trend must stay below this fraction of the shift
  double epsilon = 1e-9;
  double material_change = 0.05;  // relative delta below which windows count as unchanged
  std::size_t min_points = 3;     // per side of change_time
};

struct PatternMatch {
  PatternClass pattern = PatternClass::NoChange;
  double magnitude = 0.0;
  TimeSpan span;  // inclusive end for findings
};

struct AnomalyFinding {
  std::string source;  // metric name or "template:<id>"
  PatternClass pattern = PatternClass::NoChange;
  EpochSeconds start = 0;
  EpochSeconds end = 0;
  double magnitude = 0.0;
  std::string description;

  bool operator==(const AnomalyFinding&) const = default;
};

struct WindowStats {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;

  bool operator==(const WindowStats&) const = default;
};

struct WindowComparison {
  std::string source;
  std::string unit;
  WindowStats before;
  WindowStats after;
  double delta_max = 0.0;
  double delta_min = 0.0;
  double delta_mean = 0.0;
  std::string summary;

  bool material(double threshold) const;
  bool operator==(const WindowComparison&) const = default;
};

// Population z-score; a zero-variance series maps to all zeros.
MetricSeries normalize(const MetricSeries& series);

PatternMatch classify_pattern(const MetricSeries& series, EpochSeconds change_time,
                              const PatternRuleConfig& rules = {});

// Template sentence for a finding; stable wording so prompts diff cleanly.
std::string describe_finding(std::string_view source, PatternClass pattern, double magnitude);

// Classifies every series and keeps the non-NoChange results as findings,
// in input order. OpenMP over series; the serial version is the reference.
std::vector<AnomalyFinding> detect_findings(const std::vector<MetricSeries>& series,
                                            EpochSeconds change_time, const PatternRuleConfig& rules);
std::vector<AnomalyFinding> detect_findings_serial(const std::vector<MetricSeries>& series,
                                                   EpochSeconds change_time,
                                                   const PatternRuleConfig& rules);

// Stats over [before.start, before.end) and [after.start, after.end).
// Throws Error(EmptyWindow) when either span has no samples.
WindowComparison compare_windows(const MetricSeries& series, TimeSpan before, TimeSpan after,
                                 const PatternRuleConfig& rules = {});

}  // namespace changelens
