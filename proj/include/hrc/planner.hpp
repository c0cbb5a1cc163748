#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hrc/belief.hpp"
#include "hrc/world.hpp"

namespace hrc {

// Penalty weights are in seconds-equivalent.
struct CostModel {
  double lead_penalty = 30.0;      // explicit assignment to a human who prefers to lead
  double error_penalty = 60.0;     // leaving an error-prone human to choose freely
  double conflict_penalty = 45.0;  // robot takes a task already assigned to the human
  double reject_inflation = 1.25;  // makespan ratio above which a human assignment may be rejected
  double reject_error = 0.4;       // ... provided E[p_e] exceeds this

  void validate() const;
};

enum class AssignmentMode { robot, explicit_assignment, free_choice };
std::string_view to_string(AssignmentMode m);

// Expected cost of `task` done by `agent` in `mode` (robot tasks use
// AssignmentMode::robot). Throws LookupError when the agent cannot reach the
// task's color.
double task_cost(const TaskSpec& task, Agent agent, AssignmentMode mode, const BeliefState& beliefs,
                 const DurationModel& durations, const Layout& layout, const CostModel& costs,
                 bool pending_for_human);

struct CostRow {
  TaskId task;
  std::optional<double> human_explicit;
  std::optional<double> human_free;
  std::optional<double> robot;
  std::optional<Agent> forced;

  // Cheaper of the two human modes; explicit wins ties.
  std::optional<std::pair<double, AssignmentMode>> human_option() const;
};

struct CostTable {
  std::vector<CostRow> rows;  // sorted by task id
  std::array<double, 2> base_load{};
};

struct AllocationEntry {
  TaskId task;
  Agent agent = Agent::robot;
  AssignmentMode mode = AssignmentMode::robot;
  double cost = 0.0;
};

struct Allocation {
  std::vector<AllocationEntry> entries;  // sorted by task id
  double objective = 0.0;                // max over agents of summed cost
  double total_cost = 0.0;

  const AllocationEntry* find(TaskId task) const;
  int count(Agent agent) const;
  int explicit_assignments() const;
};

// Min-max load balancing over agents, exact by branch and bound. Ties go to
// the lower total cost, then to the lexicographically smallest agent vector
// in task-id order with human before robot. Throws ContractViolation on an
// empty table or a row with no feasible option.
Allocation select_allocation(const CostTable& table);

struct PlanningContext {
  const Scenario* scenario = nullptr;
  BeliefState beliefs;
  CostModel costs;
  // Tasks the robot has explicitly assigned to the human and not yet resolved.
  std::vector<TaskId> pending_for_human;
  // Human assignments the robot accepted; they stay with the robot.
  std::vector<TaskId> forced_robot;
  // Remaining busy time of each agent, relative to now.
  std::array<double, 2> ready{};
};

CostTable build_cost_table(const std::vector<TaskId>& tasks, const PlanningContext& ctx);

Allocation select_allocation(const std::vector<TaskId>& frontier, const BeliefState& beliefs,
                             const CostModel& costs, const DurationModel& durations,
                             const Layout& layout, const TaskGraph& graph);

struct Job {
  TaskId task;
  Agent agent = Agent::human;
  double duration = 0.0;
};

struct SchedulingProblem {
  std::vector<Job> jobs;
  std::vector<std::pair<TaskId, TaskId>> precedence;  // among jobs
  std::array<double, 2> ready{};
};

struct ScheduledTask {
  TaskId task;
  Agent agent = Agent::human;
  double start = 0.0;
  double finish = 0.0;
};

struct Schedule {
  std::vector<ScheduledTask> rows;  // sorted by (start, task id)
  double makespan() const;
  const ScheduledTask* find(TaskId task) const;
};

// Minimum-makespan schedule under precedence and one-task-at-a-time per
// agent. Exact: depth-first over start-ordered semi-active schedules with a
// load bound. Ties keep the first schedule found in task-id order.
Schedule schedule(const SchedulingProblem& problem);

Schedule schedule(const Allocation& allocation, const TaskGraph& graph,
                  const DurationModel& durations, const Layout& layout,
                  std::array<double, 2> ready = {});

enum class NextActionKind { none, wait, task };

struct NextRobotAction {
  NextActionKind kind = NextActionKind::none;
  std::optional<TaskId> task;
};

struct Plan {
  CostTable costs;
  std::optional<Allocation> allocation;  // empty when nothing to plan
  Schedule schedule;
  NextRobotAction next;
  // Completion horizon including work already in progress.
  double horizon = 0.0;
};

Plan plan_cycle(const std::vector<TaskId>& tasks, const PlanningContext& ctx);

enum class Verdict { accept, reject };

struct AssignmentDecision {
  Verdict verdict = Verdict::accept;
  std::string reason;
  double inflation = 1.0;
};

// `tasks` is the set the robot would currently plan over (the feasible
// frontier). `claimed_color` is the color the human told the robot to use.
AssignmentDecision evaluate_human_assignment(TaskId task, std::optional<Color> claimed_color,
                                             const std::vector<TaskId>& tasks,
                                             const PlanningContext& ctx);

}  // namespace hrc
