#include "hrc/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace hrc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool contains(const std::vector<TaskId>& v, TaskId t) {
  return std::find(v.begin(), v.end(), t) != v.end();
}
}  // namespace

void CostModel::validate() const {
  if (lead_penalty < 0 || error_penalty < 0 || conflict_penalty < 0)
    throw ContractViolation("penalty weights must be non-negative");
  if (!(reject_inflation >= 1.0)) throw ContractViolation("reject_inflation must be >= 1");
  if (!(reject_error >= 0.0 && reject_error <= 1.0))
    throw ContractViolation("reject_error must lie in [0, 1]");
}

std::string_view to_string(AssignmentMode m) {
  switch (m) {
    case AssignmentMode::robot: return "robot";
    case AssignmentMode::explicit_assignment: return "explicit";
    case AssignmentMode::free_choice: return "free_choice";
  }
  return "?";
}

double task_cost(const TaskSpec& task, Agent agent, AssignmentMode mode, const BeliefState& beliefs,
                 const DurationModel& durations, const Layout& layout, const CostModel& costs,
                 bool pending_for_human) {
  double cost = derive_duration(durations, layout, agent, task);
  if (agent == Agent::human) {
    if (mode == AssignmentMode::explicit_assignment)
      cost += costs.lead_penalty * (1.0 - beliefs.expected_follow());
    else if (mode == AssignmentMode::free_choice)
      cost += costs.error_penalty * beliefs.expected_error();
    else
      throw ContractViolation("human tasks are explicit or free choice");
  } else {
    if (mode != AssignmentMode::robot) throw ContractViolation("robot tasks use robot mode");
    if (pending_for_human) cost += costs.conflict_penalty;
  }
  return cost;
}

std::optional<std::pair<double, AssignmentMode>> CostRow::human_option() const {
  if (human_explicit && human_free) {
    if (*human_explicit <= *human_free)
      return std::pair{*human_explicit, AssignmentMode::explicit_assignment};
    return std::pair{*human_free, AssignmentMode::free_choice};
  }
  if (human_explicit) return std::pair{*human_explicit, AssignmentMode::explicit_assignment};
  if (human_free) return std::pair{*human_free, AssignmentMode::free_choice};
  return std::nullopt;
}

const AllocationEntry* Allocation::find(TaskId task) const {
  for (const auto& e : entries)
    if (e.task == task) return &e;
  return nullptr;
}

int Allocation::count(Agent agent) const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [&](const auto& e) { return e.agent == agent; }));
}

int Allocation::explicit_assignments() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const auto& e) {
    return e.mode == AssignmentMode::explicit_assignment;
  }));
}

// ---------------------------------------------------------------------------
// Task selection

namespace {

struct Option {
  bool feasible = false;
  double cost = 0.0;
  AssignmentMode mode = AssignmentMode::robot;
};

class AllocationSearch {
 public:
  explicit AllocationSearch(const CostTable& table) : table_(table) {
    const std::size_t n = table.rows.size();
    options_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = table.rows[i];
      auto human = row.human_option();
      if (human && (!row.forced || *row.forced == Agent::human))
        options_[i][0] = Option{true, human->first, human->second};
      if (row.robot && (!row.forced || *row.forced == Agent::robot))
        options_[i][1] = Option{true, *row.robot, AssignmentMode::robot};
      if (!options_[i][0].feasible && !options_[i][1].feasible)
        throw ContractViolation(fmt::format("task {} has no feasible agent", row.task.value));
      for (const auto& o : options_[i])
        if (o.feasible && !(o.cost >= 0.0))
          throw ContractViolation("task costs must be non-negative");
    }
    choice_.assign(n, 0);
    best_choice_.assign(n, 0);
  }

  Allocation run() {
    loads_ = table_.base_load;
    descend(0, 0.0);
    Allocation out;
    out.objective = best_objective_;
    out.total_cost = best_total_;
    for (std::size_t i = 0; i < table_.rows.size(); ++i) {
      const Option& o = options_[i][best_choice_[i]];
      out.entries.push_back(AllocationEntry{table_.rows[i].task,
                                            best_choice_[i] == 0 ? Agent::human : Agent::robot,
                                            o.mode, o.cost});
    }
    return out;
  }

 private:
  void descend(std::size_t i, double total) {
    const double bound = std::max(loads_[0], loads_[1]);
    // Loads only grow, so `bound` is a valid lower bound on the objective.
    if (bound > best_objective_) return;
    if (i == table_.rows.size()) {
      if (bound < best_objective_ || (bound == best_objective_ && total < best_total_)) {
        best_objective_ = bound;
        best_total_ = total;
        best_choice_ = choice_;
      }
      return;
    }
    for (int a = 0; a < 2; ++a) {
      const Option& o = options_[i][a];
      if (!o.feasible) continue;
      const double saved = loads_[a];
      loads_[a] += o.cost;
      choice_[i] = a;
      descend(i + 1, total + o.cost);
      loads_[a] = saved;
    }
  }

  const CostTable& table_;
  std::vector<std::array<Option, 2>> options_;
  std::array<double, 2> loads_{};
  std::vector<int> choice_, best_choice_;
  double best_objective_ = kInf;
  double best_total_ = kInf;
};

}  // namespace

Allocation select_allocation(const CostTable& table) {
  if (table.rows.empty()) throw ContractViolation("select_allocation needs a non-empty frontier");
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (!(table.rows[i - 1].task < table.rows[i].task))
      throw ContractViolation("cost rows must be sorted by task id without duplicates");
  return AllocationSearch(table).run();
}

CostTable build_cost_table(const std::vector<TaskId>& tasks, const PlanningContext& ctx) {
  if (!ctx.scenario) throw ContractViolation("planning context has no scenario");
  const Scenario& sc = *ctx.scenario;
  CostTable table;
  table.base_load = ctx.ready;
  std::vector<TaskId> sorted = tasks;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (TaskId id : sorted) {
    const TaskSpec& spec = sc.graph.task(id);
    CostRow row{id, {}, {}, {}, {}};
    const bool pending = contains(ctx.pending_for_human, id);
    if (sc.layout.reachable(Agent::human, spec.color)) {
      row.human_explicit = task_cost(spec, Agent::human, AssignmentMode::explicit_assignment,
                                     ctx.beliefs, sc.durations, sc.layout, ctx.costs, pending);
      row.human_free = task_cost(spec, Agent::human, AssignmentMode::free_choice, ctx.beliefs,
                                 sc.durations, sc.layout, ctx.costs, pending);
    }
    if (sc.layout.reachable(Agent::robot, spec.color))
      row.robot = task_cost(spec, Agent::robot, AssignmentMode::robot, ctx.beliefs, sc.durations,
                            sc.layout, ctx.costs, pending);
    if (contains(ctx.forced_robot, id)) row.forced = Agent::robot;
    table.rows.push_back(row);
  }
  return table;
}

Allocation select_allocation(const std::vector<TaskId>& frontier, const BeliefState& beliefs,
                             const CostModel& costs, const DurationModel& durations,
                             const Layout& layout, const TaskGraph& graph) {
  Scenario sc{graph, layout, Pattern(), durations, {}};
  PlanningContext ctx;
  ctx.scenario = &sc;
  ctx.beliefs = beliefs;
  ctx.costs = costs;
  return select_allocation(build_cost_table(frontier, ctx));
}

// ---------------------------------------------------------------------------
// Scheduling

double Schedule::makespan() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.finish);
  return m;
}

const ScheduledTask* Schedule::find(TaskId task) const {
  for (const auto& r : rows)
    if (r.task == task) return &r;
  return nullptr;
}

namespace {

class ScheduleSearch {
 public:
  explicit ScheduleSearch(const SchedulingProblem& p) : p_(p) {
    const std::size_t n = p.jobs.size();
    preds_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      if (!(p.jobs[i].duration > 0.0))
        throw ContractViolation(fmt::format("job {} needs a positive duration", p.jobs[i].task.value));
      for (std::size_t j = 0; j < i; ++j)
        if (p.jobs[j].task == p.jobs[i].task) throw ContractViolation("duplicate job");
    }
    auto index_of_task = [&](TaskId t) -> int {
      for (std::size_t i = 0; i < n; ++i)
        if (p.jobs[i].task == t) return static_cast<int>(i);
      return -1;
    };
    for (const auto& [a, b] : p.precedence) {
      int ia = index_of_task(a), ib = index_of_task(b);
      if (ia < 0 || ib < 0) continue;  // edges to work outside this problem are already met
      preds_[ib].push_back(ia);
    }
    // Visit jobs in task-id order so ties resolve deterministically.
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<int>(i);
    std::sort(order_.begin(), order_.end(),
              [&](int x, int y) { return p.jobs[x].task < p.jobs[y].task; });
    start_.assign(n, 0.0);
    finish_.assign(n, 0.0);
    placed_.assign(n, false);
    for (const auto& j : p.jobs) remaining_[index_of(j.agent)] += j.duration;
  }

  Schedule run() {
    free_ = p_.ready;
    root_bound_ = std::max(free_[0] + remaining_[0], free_[1] + remaining_[1]);
    if (p_.jobs.empty()) return {};
    descend(0, 0.0, 0.0);
    if (best_.empty()) throw ContractViolation("precedence among jobs is cyclic");
    Schedule s;
    for (std::size_t i = 0; i < p_.jobs.size(); ++i)
      s.rows.push_back(ScheduledTask{p_.jobs[i].task, p_.jobs[i].agent, best_start_[i],
                                     best_start_[i] + p_.jobs[i].duration});
    std::sort(s.rows.begin(), s.rows.end(), [](const auto& a, const auto& b) {
      return a.start != b.start ? a.start < b.start : a.task < b.task;
    });
    return s;
  }

 private:
  void descend(std::size_t depth, double last_start, double makespan) {
    if (done_) return;
    const double bound =
        std::max({makespan, free_[0] + remaining_[0], free_[1] + remaining_[1]});
    if (bound >= best_makespan_) return;
    if (depth == p_.jobs.size()) {
      best_makespan_ = makespan;
      best_ = placed_;
      best_start_ = start_;
      if (best_makespan_ <= root_bound_) done_ = true;
      return;
    }
    for (int i : order_) {
      if (placed_[i]) continue;
      double earliest = 0.0;
      bool ready = true;
      for (int q : preds_[i]) {
        if (!placed_[q]) { ready = false; break; }
        earliest = std::max(earliest, finish_[q]);
      }
      if (!ready) continue;
      const Job& job = p_.jobs[i];
      const std::size_t a = index_of(job.agent);
      const double s = std::max(free_[a], earliest);
      if (s < last_start) continue;  // only start-ordered sequences
      const double f = s + job.duration;
      const double saved_free = free_[a];
      placed_[i] = true;
      start_[i] = s;
      finish_[i] = f;
      free_[a] = f;
      remaining_[a] -= job.duration;
      descend(depth + 1, s, std::max(makespan, f));
      remaining_[a] += job.duration;
      free_[a] = saved_free;
      placed_[i] = false;
      if (done_) return;
    }
  }

  const SchedulingProblem& p_;
  std::vector<std::vector<int>> preds_;
  std::vector<int> order_;
  std::vector<double> start_, finish_, best_start_;
  std::vector<bool> placed_, best_;
  std::array<double, 2> free_{};
  std::array<double, 2> remaining_{};
  double root_bound_ = 0.0;
  double best_makespan_ = kInf;
  bool done_ = false;
};

}  // namespace

Schedule schedule(const SchedulingProblem& problem) { return ScheduleSearch(problem).run(); }

Schedule schedule(const Allocation& allocation, const TaskGraph& graph,
                  const DurationModel& durations, const Layout& layout,
                  std::array<double, 2> ready) {
  SchedulingProblem p;
  p.ready = ready;
  for (const auto& e : allocation.entries) {
    const TaskSpec& spec = graph.task(e.task);
    if (!layout.reachable(e.agent, spec.color))
      throw LookupError(fmt::format("{} cannot reach {} for {}", to_string(e.agent),
                                    to_string(spec.color), task_label(spec)));
    p.jobs.push_back(Job{e.task, e.agent, derive_duration(durations, layout, e.agent, spec)});
  }
  for (const auto& e : allocation.entries)
    for (const auto& f : allocation.entries)
      if (graph.precedes(e.task, f.task)) p.precedence.emplace_back(e.task, f.task);
  return schedule(p);
}

// ---------------------------------------------------------------------------
// Plan cycle

Plan plan_cycle(const std::vector<TaskId>& tasks, const PlanningContext& ctx) {
  Plan plan;
  plan.horizon = std::max(ctx.ready[0], ctx.ready[1]);
  if (tasks.empty()) return plan;
  plan.costs = build_cost_table(tasks, ctx);
  plan.allocation = select_allocation(plan.costs);
  plan.schedule = schedule(*plan.allocation, ctx.scenario->graph, ctx.scenario->durations,
                           ctx.scenario->layout, ctx.ready);
  plan.horizon = std::max(plan.horizon, plan.schedule.makespan());

  const ScheduledTask* first = nullptr;
  for (const auto& row : plan.schedule.rows)
    if (row.agent == Agent::robot && (!first || row.start < first->start)) first = &row;
  if (!first) {
    plan.next = {NextActionKind::none, std::nullopt};
  } else if (first->start > 0.0) {
    plan.next = {NextActionKind::wait, first->task};
  } else {
    plan.next = {NextActionKind::task, first->task};
  }
  return plan;
}

AssignmentDecision evaluate_human_assignment(TaskId task, std::optional<Color> claimed_color,
                                             const std::vector<TaskId>& tasks,
                                             const PlanningContext& ctx) {
  if (!ctx.scenario) throw ContractViolation("planning context has no scenario");
  const TaskSpec& spec = ctx.scenario->graph.task(task);
  if (!contains(tasks, task))
    return {Verdict::reject, "infeasible: task is not available under precedence", 0.0};
  if (!ctx.scenario->layout.reachable(Agent::robot, spec.color))
    return {Verdict::reject, "infeasible: robot cannot reach the color", 0.0};
  if (claimed_color && *claimed_color != spec.color)
    return {Verdict::reject, "wrong_color", 0.0};

  const Plan own = plan_cycle(tasks, ctx);
  PlanningContext forced = ctx;
  if (!contains(forced.forced_robot, task)) forced.forced_robot.push_back(task);
  const Plan with_task = plan_cycle(tasks, forced);
  const double inflation = own.horizon > 0.0 ? with_task.horizon / own.horizon : 1.0;
  if (inflation > ctx.costs.reject_inflation &&
      ctx.beliefs.expected_error() > ctx.costs.reject_error)
    return {Verdict::reject, "inefficient", inflation};
  return {Verdict::accept, "", inflation};
}

}  // namespace hrc
