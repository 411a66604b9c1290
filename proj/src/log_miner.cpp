#include "changelens/log_miner.hpp"

#include "changelens/error.hpp"
#include "changelens/text.hpp"

namespace changelens {

void DrainConfig::validate() const {
  if (tree_depth < 3) throw Error(ErrorCode::InvalidArgument, "drain: tree_depth must be >= 3");
  if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0))
    throw Error(ErrorCode::InvalidArgument, "drain: similarity_threshold must be in (0,1)");
  if (max_children < 1) throw Error(ErrorCode::InvalidArgument, "drain: max_children must be >= 1");
}

std::string LogTemplate::text() const { return join(tokens, " "); }

std::vector<std::string> drain_tokens(std::string_view message) {
  auto tokens = split_whitespace(message);
  for (auto& t : tokens)
    if (contains_digit(t)) t = kWildcard;
  return tokens;
}

double drain_similarity(const std::vector<std::string>& templ, const std::vector<std::string>& tokens,
                        bool count_wildcards) {
  if (templ.size() != tokens.size()) return 0.0;
  if (templ.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < templ.size(); ++i) {
    if (templ[i] == kWildcard) {
      same += count_wildcards;
      continue;
    }
    if (templ[i] == tokens[i]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(templ.size());
}

TemplateTable::TemplateTable(DrainConfig config) : config_(config) {
  config_.validate();
  nodes_.emplace_back();
}

const LogTemplate* TemplateTable::find(int template_id) const {
  if (template_id < 1 || static_cast<std::size_t>(template_id) > templates_.size()) return nullptr;
  return &templates_[static_cast<std::size_t>(template_id - 1)];
}

std::size_t TemplateTable::child(std::size_t node, const std::string& key) {
  if (auto it = nodes_[node].children.find(key); it != nodes_[node].children.end()) return it->second;
  nodes_.emplace_back();
  const auto idx = nodes_.size() - 1;
  nodes_[node].children.emplace(key, idx);
  return idx;
}

// Root, length layer and leaf list count toward tree_depth, leaving
// tree_depth - 3 layers routed by leading tokens.
std::optional<std::size_t> TemplateTable::leaf_for(const std::vector<std::string>& tokens) const {
  auto it = length_nodes_.find(tokens.size());
  if (it == length_nodes_.end()) return std::nullopt;
  std::size_t node = it->second;
  std::size_t depth = 1;
  for (const auto& token : tokens) {
    if (depth >= static_cast<std::size_t>(config_.tree_depth) - 2 || depth > tokens.size()) break;
    const auto& kids = nodes_[node].children;
    if (auto c = kids.find(token); c != kids.end()) {
      node = c->second;
    } else if (auto w = kids.find(std::string(kWildcard)); w != kids.end()) {
      node = w->second;
    } else {
      return std::nullopt;
    }
    ++depth;
  }
  return node;
}

std::optional<std::size_t> TemplateTable::best_cluster(const std::vector<std::size_t>& candidates,
                                                       const std::vector<std::string>& tokens,
                                                       bool count_wildcards) const {
  std::optional<std::size_t> best;
  double best_sim = -1.0;
  std::size_t best_params = 0;
  for (auto ci : candidates) {
    const auto& t = templates_[ci].tokens;
    const double sim = drain_similarity(t, tokens, count_wildcards);
    std::size_t params = 0;
    for (const auto& tok : t) params += (tok == kWildcard);
    if (sim > best_sim || (sim == best_sim && params > best_params)) {
      best = ci;
      best_sim = sim;
      best_params = params;
    }
  }
  if (best && best_sim >= config_.similarity_threshold) return best;
  return std::nullopt;
}

void TemplateTable::insert(std::size_t cluster_index) {
  const auto& tokens = templates_[cluster_index].tokens;
  const auto len = tokens.size();
  std::size_t node;
  if (auto it = length_nodes_.find(len); it != length_nodes_.end()) {
    node = it->second;
  } else {
    nodes_.emplace_back();
    node = nodes_.size() - 1;
    length_nodes_.emplace(len, node);
  }
  const auto max_children = static_cast<std::size_t>(config_.max_children);
  const std::string wildcard(kWildcard);
  std::size_t depth = 1;
  for (const auto& token : tokens) {
    if (depth >= static_cast<std::size_t>(config_.tree_depth) - 2 || depth > len) break;
    auto& kids = nodes_[node].children;
    if (kids.count(token)) {
      node = kids.at(token);
    } else if (token == kWildcard) {
      node = child(node, wildcard);
    } else if (kids.count(wildcard)) {
      node = kids.size() < max_children ? child(node, token) : kids.at(wildcard);
    } else if (kids.size() + 1 < max_children) {
      node = child(node, token);
    } else {
      node = child(node, wildcard);
    }
    ++depth;
  }
  nodes_[node].clusters.push_back(cluster_index);
}

int TemplateTable::learn(const LogEvent& event, Phase phase) {
  auto tokens = drain_tokens(event.message);
  std::optional<std::size_t> hit;
  if (auto leaf = leaf_for(tokens)) hit = best_cluster(nodes_[*leaf].clusters, tokens, false);

  if (hit) {
    auto& t = templates_[*hit];
    for (std::size_t i = 0; i < t.tokens.size(); ++i)
      if (t.tokens[i] != tokens[i]) t.tokens[i] = kWildcard;
    ++t.support;
    if (phase == Phase::Pre) ++t.pre_support;
    return t.template_id;
  }

  LogTemplate t;
  t.template_id = static_cast<int>(templates_.size()) + 1;
  t.tokens = std::move(tokens);
  t.support = 1;
  t.pre_support = phase == Phase::Pre ? 1 : 0;
  t.novel = phase == Phase::Post;
  t.representative = event.message;
  templates_.push_back(std::move(t));
  insert(templates_.size() - 1);
  return templates_.back().template_id;
}

MatchResult TemplateTable::match(std::string_view message) const {
  if (is_blank(message)) throw Error(ErrorCode::EmptyMessage, "match_log: empty message");
  const auto tokens = drain_tokens(message);
  if (auto leaf = leaf_for(tokens)) {
    if (auto ci = best_cluster(nodes_[*leaf].clusters, tokens, true)) return {templates_[*ci].template_id};
  }
  // Routing can drift when a later cluster adds an exact-token child next to
  // a wildcard branch; scan every cluster of the same length before giving up.
  std::vector<std::size_t> same_length;
  for (std::size_t i = 0; i < templates_.size(); ++i)
    if (templates_[i].tokens.size() == tokens.size()) same_length.push_back(i);
  if (auto ci = best_cluster(same_length, tokens, true)) return {templates_[*ci].template_id};
  return {};
}

TemplateTable mine_templates(const std::vector<LogEvent>& events, const DrainConfig& config) {
  TemplateTable table(config);
  for (const auto& e : events) table.learn(e, TemplateTable::Phase::Pre);
  return table;
}

MatchResult match_log(const TemplateTable& table, const LogEvent& event) {
  return table.match(event.message);
}

std::vector<MetricSeries> frequency_series(const std::vector<LogEvent>& events,
                                           const TemplateTable& table,
                                           EpochSeconds window_seconds, TimeSpan span) {
  if (span.start >= span.end) throw Error(ErrorCode::InvalidSpan, "frequency_series: start >= end");
  if (window_seconds <= 0)
    throw Error(ErrorCode::InvalidArgument, "frequency_series: window_seconds must be positive");
  const auto windows =
      static_cast<std::size_t>((span.end - span.start + window_seconds - 1) / window_seconds);

  std::vector<MetricSeries> out;
  out.reserve(table.size());
  for (const auto& t : table.templates()) {
    MetricSeries s;
    s.name = "template:" + std::to_string(t.template_id);
    s.unit = "count";
    s.timestamps.resize(windows);
    s.values.assign(windows, 0.0);
    for (std::size_t w = 0; w < windows; ++w)
      s.timestamps[w] = span.start + static_cast<EpochSeconds>(w) * window_seconds;
    out.push_back(std::move(s));
  }
  for (const auto& e : events) {
    if (e.timestamp < span.start || e.timestamp >= span.end || is_blank(e.message)) continue;
    const auto m = table.match(e.message);
    if (m.is_novel()) continue;
    const auto w = static_cast<std::size_t>((e.timestamp - span.start) / window_seconds);
    out[static_cast<std::size_t>(*m.template_id - 1)].values[w] += 1.0;
  }
  return out;
}

PostChangeMining mine_post_change(const TemplateTable& pre_table,
                                  const std::vector<LogEvent>& post_events) {
  PostChangeMining r{pre_table, {}};
  for (const auto& e : post_events) r.table.learn(e, TemplateTable::Phase::Post);
  for (const auto& t : r.table.templates())
    if (t.novel) r.novel.push_back(t);
  return r;
}

std::vector<LogTemplate> detect_novel_templates(const TemplateTable& pre_table,
                                                const std::vector<LogEvent>& post_events) {
  return mine_post_change(pre_table, post_events).novel;
}

}  // namespace changelens
