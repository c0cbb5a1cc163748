#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hrc {

enum class Color : std::uint8_t { green, blue, pink, orange };
inline constexpr std::array<Color, 4> kAllColors{Color::green, Color::blue,
                                                 Color::pink, Color::orange};

enum class Agent : std::uint8_t { human, robot };
inline constexpr std::array<Agent, 2> kAllAgents{Agent::human, Agent::robot};
inline constexpr std::size_t index_of(Agent a) { return static_cast<std::size_t>(a); }
inline constexpr Agent other(Agent a) {
  return a == Agent::human ? Agent::robot : Agent::human;
}

enum class Difficulty : std::uint8_t { easy, medium, difficult };

std::string_view to_string(Color c);
std::string_view to_string(Agent a);
std::string_view to_string(Difficulty d);
// These throw ValidationError on unknown names.
Color parse_color(std::string_view name);
Agent parse_agent(std::string_view name);
Difficulty parse_difficulty(std::string_view name);

// A scenario or configuration that fails its schema checks. `field` names the
// offending entry using a dotted path, e.g. "tables.human[1].colors".
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct TaskId {
  int value = 0;
  auto operator<=>(const TaskId&) const = default;
};

struct TaskSpec {
  TaskId id;
  int workspace = 0;
  int spot = 0;
  // Color the spot must end up holding.
  Color color = Color::green;
};

// Human-readable id, "W<workspace>S<spot>" with one-based numbers.
std::string task_label(const TaskSpec& task);

// Tasks plus precedence edges. Task ids are dense: tasks()[i].id.value == i.
class TaskGraph {
 public:
  TaskGraph() = default;
  // Throws ValidationError on duplicate (workspace, spot) pairs, dangling
  // edges or cycles.
  TaskGraph(std::vector<TaskSpec> tasks, std::vector<std::pair<TaskId, TaskId>> edges);

  std::size_t size() const { return tasks_.size(); }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const TaskSpec& task(TaskId id) const;
  const std::vector<TaskId>& predecessors(TaskId id) const;
  const std::vector<TaskId>& successors(TaskId id) const;
  const std::vector<std::pair<TaskId, TaskId>>& edges() const { return edges_; }
  // Direct precedence P(before, after).
  bool precedes(TaskId before, TaskId after) const;
  std::optional<TaskId> find(int workspace, int spot) const;
  std::optional<TaskId> find(std::string_view label) const;
  std::vector<TaskId> topological_order() const;

 private:
  std::vector<TaskSpec> tasks_;
  std::vector<std::pair<TaskId, TaskId>> edges_;
  std::vector<std::vector<TaskId>> preds_;
  std::vector<std::vector<TaskId>> succs_;
};

struct Table {
  std::string name;
  double distance_m = 0.0;  // one way, table to the shared workspace
  std::vector<Color> colors;
};

struct AgentLayout {
  std::vector<Table> tables;
};

class Layout {
 public:
  Layout() = default;
  explicit Layout(std::array<AgentLayout, 2> agents) : agents_(std::move(agents)) {}

  const AgentLayout& agent(Agent a) const { return agents_[index_of(a)]; }
  bool reachable(Agent a, Color c) const;
  // Throws LookupError when no table of `a` holds `c`.
  const Table& table_for(Agent a, Color c) const;

 private:
  std::array<AgentLayout, 2> agents_;
};

class Pattern {
 public:
  Pattern() = default;
  Pattern(int workspaces, int spots, std::vector<Color> colors);

  int workspaces() const { return workspaces_; }
  int spots() const { return spots_; }
  Color at(int workspace, int spot) const;
  const std::vector<Color>& colors() const { return colors_; }

 private:
  int workspaces_ = 0;
  int spots_ = 0;
  std::vector<Color> colors_;  // row-major by workspace
};

// One spot as shown on the partial pattern sheet: a single color, or two
// candidates of which exactly one is right.
struct SpotHint {
  Color first = Color::green;
  std::optional<Color> second;

  bool ambiguous() const { return second.has_value(); }
  bool admits(Color c) const { return first == c || (second && *second == c); }
};

struct PatternVariant {
  Difficulty difficulty = Difficulty::easy;
  int workspaces = 0;
  int spots = 0;
  std::vector<SpotHint> hints;  // row-major by workspace

  const SpotHint& at(int workspace, int spot) const;
  int ambiguous_count() const;
};

struct AgentTiming {
  double pick_s = 0.0;
  double place_s = 0.0;
  double speed_mps = 1.0;
};

struct DurationModel {
  std::array<AgentTiming, 2> agents;
  const AgentTiming& of(Agent a) const { return agents[index_of(a)]; }
};

// Fraction of spots shown with two candidate colors.
struct AmbiguityRatios {
  double easy = 0.25;
  double medium = 0.50;
  double difficult = 0.75;
  double of(Difficulty d) const;
};

struct ScenarioConfig {
  int schema_version = 1;
  int workspaces = 4;
  int spots = 5;
  std::optional<Pattern> pattern;  // required unless the default 4x5 board
  std::array<AgentLayout, 2> tables;
  DurationModel durations;
  AmbiguityRatios ambiguity;

  static ScenarioConfig defaults();
  // Throws ValidationError naming the first offending field.
  void validate() const;
};

struct Scenario {
  TaskGraph graph;
  Layout layout;
  Pattern pattern;
  DurationModel durations;
  AmbiguityRatios ambiguity;
};

Pattern default_pattern();
Scenario build_scenario(const ScenarioConfig& config);

PatternVariant generate_variant(const Pattern& pattern, Difficulty difficulty,
                                std::uint64_t seed, const AmbiguityRatios& ratios = {});

// Tasks not completed whose predecessors are all completed. `completed` is
// indexed by task id. Throws ConsistencyError if `completed` is not closed
// under predecessors.
std::vector<TaskId> frontier(const TaskGraph& graph, const std::vector<bool>& completed);

// Round trip table -> workspace for one fetch.
double travel_distance(const Layout& layout, Agent agent, Color color);
double derive_duration(const DurationModel& model, const Layout& layout, Agent agent,
                       const TaskSpec& task);

}  // namespace hrc
