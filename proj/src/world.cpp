#include "hrc/world.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <queue>

#include "hrc/random.hpp"

namespace hrc {

std::string_view to_string(Color c) {
  switch (c) {
    case Color::green: return "green";
    case Color::blue: return "blue";
    case Color::pink: return "pink";
    case Color::orange: return "orange";
  }
  return "?";
}

std::string_view to_string(Agent a) { return a == Agent::human ? "human" : "robot"; }

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::difficult: return "difficult";
  }
  return "?";
}

Color parse_color(std::string_view name) {
  for (Color c : kAllColors)
    if (to_string(c) == name) return c;
  throw ValidationError("color", fmt::format("unknown color '{}'", name));
}

Agent parse_agent(std::string_view name) {
  for (Agent a : kAllAgents)
    if (to_string(a) == name) return a;
  throw ValidationError("agent", fmt::format("unknown agent '{}'", name));
}

Difficulty parse_difficulty(std::string_view name) {
  for (Difficulty d : {Difficulty::easy, Difficulty::medium, Difficulty::difficult})
    if (to_string(d) == name) return d;
  throw ValidationError("difficulty", fmt::format("unknown difficulty '{}'", name));
}

std::string task_label(const TaskSpec& task) {
  return fmt::format("W{}S{}", task.workspace + 1, task.spot + 1);
}

// ---------------------------------------------------------------------------
// TaskGraph

TaskGraph::TaskGraph(std::vector<TaskSpec> tasks, std::vector<std::pair<TaskId, TaskId>> edges)
    : tasks_(std::move(tasks)), edges_(std::move(edges)) {
  const int n = static_cast<int>(tasks_.size());
  std::map<std::pair<int, int>, int> seen;
  for (int i = 0; i < n; ++i) {
    if (tasks_[i].id.value != i)
      throw ValidationError(fmt::format("tasks[{}].id", i), "task ids must be dense and ordered");
    auto key = std::make_pair(tasks_[i].workspace, tasks_[i].spot);
    if (!seen.emplace(key, i).second)
      throw ValidationError(fmt::format("tasks[{}]", i),
                            fmt::format("duplicate spot {}", task_label(tasks_[i])));
  }
  preds_.assign(n, {});
  succs_.assign(n, {});
  for (const auto& [a, b] : edges_) {
    if (a.value < 0 || a.value >= n || b.value < 0 || b.value >= n)
      throw ValidationError("precedence", "edge references an unknown task");
    if (a == b) throw ValidationError("precedence", "self loop");
    preds_[b.value].push_back(a);
    succs_[a.value].push_back(b);
  }
  for (auto& v : preds_) std::sort(v.begin(), v.end());
  for (auto& v : succs_) std::sort(v.begin(), v.end());
  if (topological_order().size() != tasks_.size())
    throw ValidationError("precedence", "task graph contains a cycle");
}

const TaskSpec& TaskGraph::task(TaskId id) const {
  if (id.value < 0 || id.value >= static_cast<int>(tasks_.size()))
    throw LookupError(fmt::format("unknown task id {}", id.value));
  return tasks_[id.value];
}

const std::vector<TaskId>& TaskGraph::predecessors(TaskId id) const {
  task(id);
  return preds_[id.value];
}

const std::vector<TaskId>& TaskGraph::successors(TaskId id) const {
  task(id);
  return succs_[id.value];
}

bool TaskGraph::precedes(TaskId before, TaskId after) const {
  const auto& p = predecessors(after);
  return std::binary_search(p.begin(), p.end(), before);
}

std::optional<TaskId> TaskGraph::find(int workspace, int spot) const {
  for (const auto& t : tasks_)
    if (t.workspace == workspace && t.spot == spot) return t.id;
  return std::nullopt;
}

std::optional<TaskId> TaskGraph::find(std::string_view label) const {
  for (const auto& t : tasks_)
    if (task_label(t) == label) return t.id;
  return std::nullopt;
}

std::vector<TaskId> TaskGraph::topological_order() const {
  const std::size_t n = tasks_.size();
  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = preds_[i].size();
  // Min-heap keeps the order deterministic.
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(static_cast<int>(i));
  std::vector<TaskId> order;
  order.reserve(n);
  while (!ready.empty()) {
    int v = ready.top();
    ready.pop();
    order.push_back(TaskId{v});
    for (TaskId s : succs_[v])
      if (--indegree[s.value] == 0) ready.push(s.value);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Layout / Pattern

bool Layout::reachable(Agent a, Color c) const {
  for (const auto& t : agent(a).tables)
    if (std::find(t.colors.begin(), t.colors.end(), c) != t.colors.end()) return true;
  return false;
}

const Table& Layout::table_for(Agent a, Color c) const {
  for (const auto& t : agent(a).tables)
    if (std::find(t.colors.begin(), t.colors.end(), c) != t.colors.end()) return t;
  throw LookupError(fmt::format("{} has no table holding {}", to_string(a), to_string(c)));
}

Pattern::Pattern(int workspaces, int spots, std::vector<Color> colors)
    : workspaces_(workspaces), spots_(spots), colors_(std::move(colors)) {
  if (workspaces_ <= 0 || spots_ <= 0)
    throw ValidationError("pattern", "dimensions must be positive");
  if (colors_.size() != static_cast<std::size_t>(workspaces_ * spots_))
    throw ValidationError("pattern", fmt::format("expected {} colors, got {}",
                                                 workspaces_ * spots_, colors_.size()));
}

Color Pattern::at(int workspace, int spot) const {
  if (workspace < 0 || workspace >= workspaces_ || spot < 0 || spot >= spots_)
    throw LookupError(fmt::format("pattern has no spot ({}, {})", workspace, spot));
  return colors_[workspace * spots_ + spot];
}

const SpotHint& PatternVariant::at(int workspace, int spot) const {
  if (workspace < 0 || workspace >= workspaces || spot < 0 || spot >= spots)
    throw LookupError(fmt::format("variant has no spot ({}, {})", workspace, spot));
  return hints[workspace * spots + spot];
}

int PatternVariant::ambiguous_count() const {
  return static_cast<int>(std::count_if(hints.begin(), hints.end(),
                                        [](const SpotHint& h) { return h.ambiguous(); }));
}

double AmbiguityRatios::of(Difficulty d) const {
  switch (d) {
    case Difficulty::easy: return easy;
    case Difficulty::medium: return medium;
    case Difficulty::difficult: return difficult;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Scenario configuration

Pattern default_pattern() {
  using enum Color;
  return Pattern(4, 5,
                 {green, blue, pink, orange, blue,     //
                  orange, green, blue, pink, green,    //
                  pink, orange, green, blue, orange,   //
                  blue, pink, orange, green, pink});
}

ScenarioConfig ScenarioConfig::defaults() {
  using enum Color;
  ScenarioConfig c;
  c.pattern = default_pattern();
  c.tables[index_of(Agent::human)].tables = {
      Table{"close", 4.0, {green, orange}},
      Table{"far", 11.0, {blue, pink}},
  };
  c.tables[index_of(Agent::robot)].tables = {
      Table{"close", 4.0, {pink, orange}},
      Table{"far", 9.0, {blue, green}},
  };
  c.durations.agents[index_of(Agent::human)] = AgentTiming{3.0, 3.0, 1.0};
  c.durations.agents[index_of(Agent::robot)] = AgentTiming{10.0, 10.0, 0.5};
  return c;
}

void ScenarioConfig::validate() const {
  if (schema_version != 1)
    throw ValidationError("schema_version", fmt::format("unsupported version {}", schema_version));
  if (workspaces < 1) throw ValidationError("workspaces", "must be at least 1");
  if (spots < 1) throw ValidationError("spots", "must be at least 1");
  if (!pattern) throw ValidationError("pattern", "missing");
  if (pattern->workspaces() != workspaces || pattern->spots() != spots)
    throw ValidationError("pattern", "dimensions do not match workspaces/spots");

  for (Agent a : kAllAgents) {
    const auto& agent_tables = tables[index_of(a)].tables;
    const std::string base = fmt::format("tables.{}", to_string(a));
    if (agent_tables.empty()) throw ValidationError(base, "no tables");
    for (std::size_t i = 0; i < agent_tables.size(); ++i) {
      if (!(agent_tables[i].distance_m > 0.0) || !std::isfinite(agent_tables[i].distance_m))
        throw ValidationError(fmt::format("{}[{}].distance_m", base, i), "must be > 0");
    }
    for (Color c : kAllColors) {
      int holders = 0;
      for (const auto& t : agent_tables)
        holders += static_cast<int>(std::count(t.colors.begin(), t.colors.end(), c));
      if (holders > 1)
        throw ValidationError(base, fmt::format("{} is stocked on more than one table", to_string(c)));
    }
    for (Color c : pattern->colors()) {
      bool found = false;
      for (const auto& t : agent_tables)
        found = found || std::find(t.colors.begin(), t.colors.end(), c) != t.colors.end();
      if (!found)
        throw ValidationError(fmt::format("{}.colors", base),
                              fmt::format("pattern needs {} but no table stocks it", to_string(c)));
    }
    const auto& timing = durations.of(a);
    const std::string tbase = fmt::format("durations.{}", to_string(a));
    if (!(timing.pick_s > 0.0)) throw ValidationError(tbase + ".pick_s", "must be > 0");
    if (!(timing.place_s > 0.0)) throw ValidationError(tbase + ".place_s", "must be > 0");
    if (!(timing.speed_mps > 0.0)) throw ValidationError(tbase + ".speed_mps", "must be > 0");
  }
  for (auto [name, v] : {std::pair{"easy", ambiguity.easy}, std::pair{"medium", ambiguity.medium},
                         std::pair{"difficult", ambiguity.difficult}}) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError(fmt::format("difficulty_ratios.{}", name), "must lie in [0, 1]");
  }
}

Scenario build_scenario(const ScenarioConfig& config) {
  config.validate();
  std::vector<TaskSpec> tasks;
  std::vector<std::pair<TaskId, TaskId>> edges;
  for (int w = 0; w < config.workspaces; ++w) {
    for (int s = 0; s < config.spots; ++s) {
      TaskId id{static_cast<int>(tasks.size())};
      tasks.push_back(TaskSpec{id, w, s, config.pattern->at(w, s)});
      if (s > 0) edges.emplace_back(TaskId{id.value - 1}, id);
    }
  }
  return Scenario{TaskGraph(std::move(tasks), std::move(edges)), Layout(config.tables),
                  *config.pattern, config.durations, config.ambiguity};
}

PatternVariant generate_variant(const Pattern& pattern, Difficulty difficulty, std::uint64_t seed,
                                const AmbiguityRatios& ratios) {
  const int n = pattern.workspaces() * pattern.spots();
  const int n_ambiguous =
      static_cast<int>(std::lround(ratios.of(difficulty) * static_cast<double>(n)));

  Rng rng = make_stream(seed, StreamId::variant);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[uniform_index(rng, static_cast<std::size_t>(i) + 1)]);

  PatternVariant v;
  v.difficulty = difficulty;
  v.workspaces = pattern.workspaces();
  v.spots = pattern.spots();
  v.hints.resize(n);
  for (int i = 0; i < n; ++i) v.hints[i].first = pattern.colors()[i];

  // Ambiguous spots are assigned in index order so the result does not
  // depend on the shuffle's tail.
  std::vector<int> chosen(order.begin(), order.begin() + n_ambiguous);
  std::sort(chosen.begin(), chosen.end());
  for (int idx : chosen) {
    const Color truth = pattern.colors()[idx];
    std::array<Color, 3> others{};
    std::size_t k = 0;
    for (Color c : kAllColors)
      if (c != truth) others[k++] = c;
    const Color distractor = others[uniform_index(rng, others.size())];
    if (bernoulli(rng, 0.5))
      v.hints[idx] = SpotHint{truth, distractor};
    else
      v.hints[idx] = SpotHint{distractor, truth};
  }
  return v;
}

std::vector<TaskId> frontier(const TaskGraph& graph, const std::vector<bool>& completed) {
  if (completed.size() != graph.size())
    throw ConsistencyError("completed set does not match the task graph");
  std::vector<TaskId> out;
  for (const auto& t : graph.tasks()) {
    bool preds_done = true;
    for (TaskId p : graph.predecessors(t.id)) preds_done = preds_done && completed[p.value];
    if (completed[t.id.value]) {
      if (!preds_done)
        throw ConsistencyError(fmt::format("{} completed before its predecessors", task_label(t)));
      continue;
    }
    if (preds_done) out.push_back(t.id);
  }
  return out;
}

double travel_distance(const Layout& layout, Agent agent, Color color) {
  return 2.0 * layout.table_for(agent, color).distance_m;
}

double derive_duration(const DurationModel& model, const Layout& layout, Agent agent,
                       const TaskSpec& task) {
  const auto& t = model.of(agent);
  return t.pick_s + t.place_s + travel_distance(layout, agent, task.color) / t.speed_mps;
}

}  // namespace hrc
