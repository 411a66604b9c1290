#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "changelens/types.hpp"

namespace changelens {

inline constexpr std::string_view kWildcard = "<*>";

struct DrainConfig {
  int tree_depth = 4;
  double similarity_threshold = 0.4;
  int max_children = 100;

  // Throws Error(InvalidArgument) unless depth >= 3, 0 < st < 1, max_children >= 1.
  void validate() const;
};

struct LogTemplate {
  int template_id = 0;
  std::vector<std::string> tokens;
  std::size_t support = 0;
  bool novel = false;
  std::string representative;  // first raw message that created the cluster
  std::size_t pre_support = 0;

  std::string text() const;
  bool operator==(const LogTemplate&) const = default;
};

struct MatchResult {
  std::optional<int> template_id;  // nullopt == Novel

  bool is_novel() const { return !template_id.has_value(); }
};

struct TimeSpan {
  EpochSeconds start = 0;
  EpochSeconds end = 0;  // exclusive
};

// Whitespace split with digit-bearing tokens masked to the wildcard.
std::vector<std::string> drain_tokens(std::string_view message);

// Token-wise similarity of a message against a template of equal length.
// Clustering excludes wildcard positions (classic Drain); lookup counts them
// so an event always matches the template it helped generalise.
double drain_similarity(const std::vector<std::string>& templ, const std::vector<std::string>& tokens,
                        bool count_wildcards = false);

// Drain fixed-depth parse tree. Mining is single-writer; const lookups are
// safe to run concurrently against a table that is no longer mutated.
class TemplateTable {
 public:
  enum class Phase { Pre, Post };

  explicit TemplateTable(DrainConfig config = {});

  const DrainConfig& config() const { return config_; }
  const std::vector<LogTemplate>& templates() const { return templates_; }
  const LogTemplate* find(int template_id) const;
  std::size_t size() const { return templates_.size(); }
  bool empty() const { return templates_.empty(); }

  // Routes the event, merges into the best cluster or creates a new one.
  // Returns the template id the event was assigned to.
  int learn(const LogEvent& event, Phase phase = Phase::Pre);

  // Read-only lookup. Throws Error(EmptyMessage) on a blank message.
  MatchResult match(std::string_view message) const;

 private:
  struct Node {
    std::map<std::string, std::size_t> children;
    std::vector<std::size_t> clusters;  // indices into templates_
  };

  std::optional<std::size_t> leaf_for(const std::vector<std::string>& tokens) const;
  std::optional<std::size_t> best_cluster(const std::vector<std::size_t>& candidates,
                                          const std::vector<std::string>& tokens,
                                          bool count_wildcards) const;
  void insert(std::size_t cluster_index);
  std::size_t child(std::size_t node, const std::string& key);

  DrainConfig config_;
  std::vector<Node> nodes_;  // nodes_[0] is the root
  std::map<std::size_t, std::size_t> length_nodes_;
  std::vector<LogTemplate> templates_;
};

TemplateTable mine_templates(const std::vector<LogEvent>& events, const DrainConfig& config);

MatchResult match_log(const TemplateTable& table, const LogEvent& event);

// One count series per template (ordered by template_id), window starts as
// timestamps. The trailing partial window is kept.
std::vector<MetricSeries> frequency_series(const std::vector<LogEvent>& events,
                                           const TemplateTable& table,
                                           EpochSeconds window_seconds, TimeSpan span);

struct PostChangeMining {
  TemplateTable table;  // pre-change table extended with post-change events
  std::vector<LogTemplate> novel;
};

PostChangeMining mine_post_change(const TemplateTable& pre_table,
                                  const std::vector<LogEvent>& post_events);

std::vector<LogTemplate> detect_novel_templates(const TemplateTable& pre_table,
                                                const std::vector<LogEvent>& post_events);

}  // namespace changelens
