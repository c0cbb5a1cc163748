#pragma once

#include <array>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hrc/belief.hpp"
#include "hrc/world.hpp"

namespace hrc {

// The closed action vocabulary. The first eleven are the collaboration
// protocol proper; wait/pick/place are sub-events of physical work.
enum class ActionKind {
  human_select_task,
  human_assign_to_robot,
  human_return_object,
  human_perform_assigned,
  human_cancel_assignment,
  robot_select_task,
  robot_assign_to_human,
  robot_return_object,
  robot_perform_assigned,
  robot_cancel_assignment,
  robot_reject_assignment,
  wait,
  pick,
  place,
};

std::string_view to_string(ActionKind k);
// Throws ValidationError on unknown names.
ActionKind parse_action_kind(std::string_view name);
// Agent that may issue a protocol action; nullopt for sub-events.
std::optional<Agent> issuer_of(ActionKind k);

// Raised when an action is illegal in the current state. `rule` is a stable
// machine-readable code, e.g. "precedence" or "task_in_progress".
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string rule, const std::string& message)
      : std::runtime_error(message), rule_(std::move(rule)) {}
  const std::string& rule() const { return rule_; }

 private:
  std::string rule_;
};

struct ActionEvent {
  double t = 0.0;
  Agent agent = Agent::human;
  ActionKind kind = ActionKind::wait;
  std::optional<TaskId> task;
  std::optional<Color> color;
  std::string outcome;
  double distance_m = 0.0;
  // Start of shared-workspace occupancy for place/removal events.
  std::optional<double> workspace_from;
};

struct ActionRequest {
  Agent agent = Agent::human;
  ActionKind kind = ActionKind::wait;
  std::optional<TaskId> task;
  std::optional<Color> color;
  std::string note;  // rejection reason for robot_reject_assignment
};

struct EngineParams {
  double think_time_s = 5.0;       // scripted human deliberation before each fetch
  double return_handoff_s = 10.0;  // conveyor handoff after removing a block
  double human_wait_s = 3.0;       // length of one human wait step
  int max_consecutive_waits = 4;   // a waiting human self-selects after this many
  double time_cap_s = 3600.0;      // livelock guard

  void validate() const;
};

enum class Phase { think, to_table, pick, to_workspace, wait_workspace, place, remove, handoff };
std::string_view to_string(Phase p);

struct Activity {
  enum class Kind { fetch, removal };
  Kind kind = Kind::fetch;
  TaskId task;
  Color color = Color::green;
  bool assigned = false;  // fetch started from an assignment
  Phase phase = Phase::think;
  double phase_end = 0.0;
  double distance_m = 0.0;
  double workspace_from = 0.0;
};

struct AgentState {
  std::optional<Activity> activity;
  std::optional<double> waiting_until;  // human wait step
  bool idle() const { return !activity.has_value(); }
};

struct Assignment {
  TaskId task;
  std::optional<Color> color;
  bool accepted = false;
};

struct SessionState {
  std::shared_ptr<const Scenario> scenario;
  PatternVariant variant;
  EngineParams params;

  double clock = 0.0;
  std::array<AgentState, 2> agents;
  std::vector<std::optional<Color>> spots;  // placed block per task id
  std::vector<bool> completed;
  std::vector<bool> misplaced;
  std::optional<Agent> workspace_holder;
  std::deque<Agent> workspace_queue;
  std::vector<Assignment> to_robot;     // human -> robot, arrival order
  std::optional<Assignment> to_human;   // robot -> human, at most one
  // Last offer the human declined; not offered again until the board changes.
  std::optional<TaskId> declined_offer;
  BeliefState beliefs;
  bool robot_started = false;  // robot stays put until the first human fetch
  int human_decisions = 0;     // human fetch decisions so far
  int belief_steps = 0;        // belief snapshots taken after the prior

  SessionState() = default;
  SessionState(std::shared_ptr<const Scenario> scenario, PatternVariant variant,
               EngineParams params);

  const AgentState& agent(Agent a) const { return agents[index_of(a)]; }
  AgentState& agent(Agent a) { return agents[index_of(a)]; }
  const TaskGraph& graph() const { return scenario->graph; }

  bool finished() const;
  std::vector<TaskId> frontier() const;
  // Frontier tasks nobody is working on whose spot is empty.
  std::vector<TaskId> available_tasks() const;
  std::optional<Agent> performer(TaskId task) const;
  bool being_removed(TaskId task) const;
  const Assignment* find_to_robot(TaskId task) const;
  int correct_placements() const;
};

struct ApplyResult {
  std::vector<ActionEvent> events;
  std::vector<BeliefObservation> observations;
};

// Applies a protocol action at state.clock. Throws ProtocolError and leaves
// the state untouched when the action is illegal.
ApplyResult apply_action(SessionState& state, const ActionRequest& request);

// Earliest pending phase boundary or end of a human wait step.
std::optional<double> next_phase_time(const SessionState& state);

// Moves the clock to `t` and completes every phase ending there.
ApplyResult advance_to(SessionState& state, double t);

// Expected time until the agent is free again, assuming an uncontended
// shared workspace.
double remaining_busy(const SessionState& state, Agent agent);

// Clears a misplaced block from its spot; the task becomes available again.
// Throws ContractViolation when the task is not misplaced.
void resolve_return(SessionState& state, TaskId task);

}  // namespace hrc
