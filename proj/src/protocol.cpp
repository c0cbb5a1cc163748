#include "hrc/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hrc {

namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 14> kKindNames{{
    {ActionKind::human_select_task, "human_select_task"},
    {ActionKind::human_assign_to_robot, "human_assign_to_robot"},
    {ActionKind::human_return_object, "human_return_object"},
    {ActionKind::human_perform_assigned, "human_perform_assigned"},
    {ActionKind::human_cancel_assignment, "human_cancel_assignment"},
    {ActionKind::robot_select_task, "robot_select_task"},
    {ActionKind::robot_assign_to_human, "robot_assign_to_human"},
    {ActionKind::robot_return_object, "robot_return_object"},
    {ActionKind::robot_perform_assigned, "robot_perform_assigned"},
    {ActionKind::robot_cancel_assignment, "robot_cancel_assignment"},
    {ActionKind::robot_reject_assignment, "robot_reject_assignment"},
    {ActionKind::wait, "wait"},
    {ActionKind::pick, "pick"},
    {ActionKind::place, "place"},
}};

constexpr double kNever = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const char* rule, const std::string& message) {
  throw ProtocolError(rule, message);
}

}  // namespace

std::string_view to_string(ActionKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

ActionKind parse_action_kind(std::string_view name) {
  for (const auto& [kind, n] : kKindNames)
    if (n == name) return kind;
  throw ValidationError("kind", fmt::format("unknown action kind '{}'", name));
}

std::optional<Agent> issuer_of(ActionKind k) {
  switch (k) {
    case ActionKind::human_select_task:
    case ActionKind::human_assign_to_robot:
    case ActionKind::human_return_object:
    case ActionKind::human_perform_assigned:
    case ActionKind::human_cancel_assignment: return Agent::human;
    case ActionKind::robot_select_task:
    case ActionKind::robot_assign_to_human:
    case ActionKind::robot_return_object:
    case ActionKind::robot_perform_assigned:
    case ActionKind::robot_cancel_assignment:
    case ActionKind::robot_reject_assignment: return Agent::robot;
    case ActionKind::wait:
    case ActionKind::pick:
    case ActionKind::place: return std::nullopt;
  }
  return std::nullopt;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::think: return "think";
    case Phase::to_table: return "to_table";
    case Phase::pick: return "pick";
    case Phase::to_workspace: return "to_workspace";
    case Phase::wait_workspace: return "wait_workspace";
    case Phase::place: return "place";
    case Phase::remove: return "remove";
    case Phase::handoff: return "handoff";
  }
  return "?";
}

void EngineParams::validate() const {
  if (!(think_time_s >= 0.0)) throw ValidationError("engine.think_time_s", "must be >= 0");
  if (!(return_handoff_s >= 0.0)) throw ValidationError("engine.return_handoff_s", "must be >= 0");
  if (!(human_wait_s > 0.0)) throw ValidationError("engine.human_wait_s", "must be > 0");
  if (max_consecutive_waits < 0)
    throw ValidationError("engine.max_consecutive_waits", "must be >= 0");
  if (!(time_cap_s > 0.0)) throw ValidationError("engine.time_cap_s", "must be > 0");
}

// ---------------------------------------------------------------------------
// SessionState queries

SessionState::SessionState(std::shared_ptr<const Scenario> sc, PatternVariant v, EngineParams p)
    : scenario(std::move(sc)), variant(std::move(v)), params(p) {
  if (!scenario) throw ContractViolation("session needs a scenario");
  params.validate();
  const std::size_t n = scenario->graph.size();
  spots.assign(n, std::nullopt);
  completed.assign(n, false);
  misplaced.assign(n, false);
}

bool SessionState::finished() const {
  return std::all_of(completed.begin(), completed.end(), [](bool b) { return b; });
}

std::vector<TaskId> SessionState::frontier() const { return hrc::frontier(graph(), completed); }

std::vector<TaskId> SessionState::available_tasks() const {
  std::vector<TaskId> out;
  for (TaskId t : frontier())
    if (!spots[t.value] && !performer(t)) out.push_back(t);
  return out;
}

std::optional<Agent> SessionState::performer(TaskId task) const {
  for (Agent a : kAllAgents) {
    const auto& act = agent(a).activity;
    if (act && act->kind == Activity::Kind::fetch && act->task == task) return a;
  }
  return std::nullopt;
}

bool SessionState::being_removed(TaskId task) const {
  for (Agent a : kAllAgents) {
    const auto& act = agent(a).activity;
    if (act && act->kind == Activity::Kind::removal && act->task == task) return true;
  }
  return false;
}

const Assignment* SessionState::find_to_robot(TaskId task) const {
  for (const auto& a : to_robot)
    if (a.task == task) return &a;
  return nullptr;
}

int SessionState::correct_placements() const {
  return static_cast<int>(std::count(completed.begin(), completed.end(), true));
}

// ---------------------------------------------------------------------------
// Transitions

namespace {

ActionEvent make_event(const SessionState& s, Agent agent, ActionKind kind,
                       std::optional<TaskId> task, std::optional<Color> color,
                       std::string outcome) {
  ActionEvent e;
  e.t = s.clock;
  e.agent = agent;
  e.kind = kind;
  e.task = task;
  e.color = color;
  e.outcome = std::move(outcome);
  return e;
}

std::string label(const SessionState& s, TaskId t) { return task_label(s.graph().task(t)); }

TaskId require_task(const SessionState& s, const ActionRequest& r) {
  if (!r.task) fail("missing_task", fmt::format("{} needs a task", to_string(r.kind)));
  if (r.task->value < 0 || r.task->value >= static_cast<int>(s.graph().size()))
    fail("unknown_task", fmt::format("task id {} does not exist", r.task->value));
  return *r.task;
}

// Checks shared by every fetch: the spot can be filled right now.
void require_fillable(const SessionState& s, TaskId t, Agent who) {
  if (s.completed[t.value]) fail("task_completed", fmt::format("{} is already done", label(s, t)));
  if (auto p = s.performer(t))
    fail("task_in_progress", fmt::format("{} is already being performed by the {}", label(s, t),
                                         to_string(*p)));
  if (s.spots[t.value])
    fail("spot_occupied", fmt::format("{} holds a block that must be returned first", label(s, t)));
  for (TaskId p : s.graph().predecessors(t))
    if (!s.completed[p.value])
      fail("precedence", fmt::format("{} must wait for {}", label(s, t), label(s, p)));
  const Color c = s.graph().task(t).color;
  if (who == Agent::robot && !s.scenario->layout.reachable(who, c))
    fail("unreachable_color", fmt::format("robot cannot fetch {}", to_string(c)));
}

void require_idle(const SessionState& s, Agent a) {
  if (!s.agent(a).idle())
    fail("agent_busy", fmt::format("the {} is busy", to_string(a)));
}

void start_fetch(SessionState& s, Agent a, TaskId t, Color color, bool assigned) {
  const auto& timing = s.scenario->durations.of(a);
  Activity act;
  act.kind = Activity::Kind::fetch;
  act.task = t;
  act.color = color;
  act.assigned = assigned;
  act.distance_m = travel_distance(s.scenario->layout, a, color);
  const double think = a == Agent::human ? s.params.think_time_s : 0.0;
  if (think > 0.0) {
    act.phase = Phase::think;
    act.phase_end = s.clock + think;
  } else {
    act.phase = Phase::to_table;
    act.phase_end = s.clock + 0.5 * act.distance_m / timing.speed_mps;
  }
  s.agent(a).activity = act;
  s.agent(a).waiting_until.reset();
}

// Claims the shared workspace for the agent's current activity, or queues it.
// Returns the wait event when the workspace is taken.
std::optional<ActionEvent> request_workspace(SessionState& s, Agent a) {
  Activity& act = *s.agent(a).activity;
  const auto& timing = s.scenario->durations.of(a);
  const Phase work = act.kind == Activity::Kind::fetch ? Phase::place : Phase::remove;
  const double length = act.kind == Activity::Kind::fetch ? timing.place_s : timing.pick_s;
  if (!s.workspace_holder) {
    s.workspace_holder = a;
    act.phase = work;
    act.workspace_from = s.clock;
    act.phase_end = s.clock + length;
    return std::nullopt;
  }
  act.phase = Phase::wait_workspace;
  act.phase_end = kNever;
  s.workspace_queue.push_back(a);
  return make_event(s, a, ActionKind::wait, act.task, std::nullopt, "workspace_busy");
}

void release_workspace(SessionState& s, Agent a) {
  if (s.workspace_holder != a) throw InvariantViolation("workspace released by a non-holder");
  s.workspace_holder.reset();
  if (!s.workspace_queue.empty()) {
    Agent next = s.workspace_queue.front();
    s.workspace_queue.pop_front();
    request_workspace(s, next);
  }
}

void start_removal(SessionState& s, Agent a, TaskId t, std::vector<ActionEvent>& events) {
  Activity act;
  act.kind = Activity::Kind::removal;
  act.task = t;
  act.color = *s.spots[t.value];
  s.agent(a).activity = act;
  s.agent(a).waiting_until.reset();
  if (auto wait = request_workspace(s, a)) events.push_back(*wait);
}

}  // namespace

ApplyResult apply_action(SessionState& s, const ActionRequest& r) {
  if (s.finished()) fail("session_finished", "all spots are already filled");
  ApplyResult out;
  const auto issuer = issuer_of(r.kind);
  if (r.kind == ActionKind::pick || r.kind == ActionKind::place)
    fail("sub_event", "pick and place are emitted by the engine, not requested");
  if (issuer && *issuer != r.agent)
    fail("wrong_agent", fmt::format("{} cannot issue {}", to_string(r.agent), to_string(r.kind)));

  switch (r.kind) {
    case ActionKind::wait: {
      if (r.agent == Agent::human) {
        require_idle(s, Agent::human);
        s.agent(Agent::human).waiting_until = s.clock + s.params.human_wait_s;
      }
      out.events.push_back(make_event(s, r.agent, r.kind, std::nullopt, std::nullopt, "idle"));
      break;
    }

    case ActionKind::human_select_task: {
      require_idle(s, Agent::human);
      const TaskId t = require_task(s, r);
      require_fillable(s, t, Agent::human);
      if (s.find_to_robot(t))
        fail("assigned_to_robot",
             fmt::format("{} is assigned to the robot; cancel it first", label(s, t)));
      if (s.to_human && s.to_human->task == t) {
        // Taking the task the robot asked for is compliance.
        ActionRequest as_assigned = r;
        as_assigned.kind = ActionKind::human_perform_assigned;
        return apply_action(s, as_assigned);
      }
      if (!r.color) fail("missing_color", "self-selection needs a color");
      if (!s.scenario->layout.reachable(Agent::human, *r.color))
        fail("unreachable_color", fmt::format("human cannot fetch {}", to_string(*r.color)));
      const bool opening = !s.robot_started;
      start_fetch(s, Agent::human, t, *r.color, false);
      s.robot_started = true;
      ++s.human_decisions;
      out.events.push_back(make_event(s, Agent::human, r.kind, t, r.color, "started"));
      // The opening selection is forced by the protocol and says nothing
      // about the human's preference.
      if (!opening) out.observations.push_back({ObservationKind::self_selected_task});
      break;
    }

    case ActionKind::human_perform_assigned: {
      require_idle(s, Agent::human);
      const TaskId t = require_task(s, r);
      if (!s.to_human || s.to_human->task != t)
        fail("no_pending_assignment",
             fmt::format("the robot has not assigned {} to the human", label(s, t)));
      require_fillable(s, t, Agent::human);
      const Color c = s.graph().task(t).color;
      start_fetch(s, Agent::human, t, c, true);
      s.to_human.reset();
      s.robot_started = true;
      ++s.human_decisions;
      out.events.push_back(make_event(s, Agent::human, ActionKind::human_perform_assigned, t,
                                      std::nullopt, "started"));
      out.observations.push_back({ObservationKind::complied_with_assignment});
      break;
    }

    case ActionKind::human_assign_to_robot: {
      require_idle(s, Agent::human);
      const TaskId t = require_task(s, r);
      if (s.completed[t.value]) fail("task_completed", fmt::format("{} is already done", label(s, t)));
      if (s.performer(t))
        fail("task_in_progress", fmt::format("{} is already being performed", label(s, t)));
      if (s.find_to_robot(t) || (s.to_human && s.to_human->task == t))
        fail("already_assigned", fmt::format("{} already has a pending assignment", label(s, t)));
      s.to_robot.push_back(Assignment{t, r.color, false});
      out.events.push_back(make_event(s, Agent::human, r.kind, t, r.color, "pending"));
      out.observations.push_back({ObservationKind::assigned_task_to_robot});
      break;
    }

    case ActionKind::human_cancel_assignment: {
      require_idle(s, Agent::human);
      const TaskId t = require_task(s, r);
      if (s.to_human && s.to_human->task == t) {
        s.to_human.reset();
        s.declined_offer = t;
        out.events.push_back(make_event(s, Agent::human, r.kind, t, std::nullopt, "declined"));
        out.observations.push_back({ObservationKind::canceled_robot_assignment});
        break;
      }
      auto it = std::find_if(s.to_robot.begin(), s.to_robot.end(),
                             [&](const Assignment& a) { return a.task == t; });
      if (it == s.to_robot.end())
        fail("no_pending_assignment", fmt::format("{} has no pending assignment", label(s, t)));
      s.to_robot.erase(it);
      out.events.push_back(make_event(s, Agent::human, r.kind, t, std::nullopt, "retracted"));
      break;
    }

    case ActionKind::human_return_object:
    case ActionKind::robot_return_object: {
      require_idle(s, r.agent);
      const TaskId t = require_task(s, r);
      if (!s.misplaced[t.value])
        fail("not_misplaced", fmt::format("{} holds no wrong block", label(s, t)));
      if (s.being_removed(t))
        fail("task_in_progress", fmt::format("{} is already being cleared", label(s, t)));
      out.events.push_back(make_event(s, r.agent, r.kind, t, s.spots[t.value], "started"));
      start_removal(s, r.agent, t, out.events);
      break;
    }

    case ActionKind::robot_select_task: {
      require_idle(s, Agent::robot);
      if (!s.robot_started) fail("robot_waits_for_human", "the robot waits for the human's first task");
      const TaskId t = require_task(s, r);
      require_fillable(s, t, Agent::robot);
      if (s.find_to_robot(t))
        fail("assignment_pending", fmt::format("{} is a human assignment; use it as such", label(s, t)));
      if (s.to_human && s.to_human->task == t)
        fail("assigned_to_human", fmt::format("{} is assigned to the human; cancel it first", label(s, t)));
      start_fetch(s, Agent::robot, t, s.graph().task(t).color, false);
      out.events.push_back(make_event(s, Agent::robot, r.kind, t, s.graph().task(t).color, "started"));
      break;
    }

    case ActionKind::robot_perform_assigned: {
      const TaskId t = require_task(s, r);
      auto it = std::find_if(s.to_robot.begin(), s.to_robot.end(),
                             [&](const Assignment& a) { return a.task == t; });
      if (it == s.to_robot.end())
        fail("no_pending_assignment", fmt::format("the human has not assigned {}", label(s, t)));
      if (!it->accepted) {
        it->accepted = true;
        out.events.push_back(make_event(s, Agent::robot, r.kind, t, it->color, "accepted"));
        break;
      }
      require_idle(s, Agent::robot);
      if (!s.robot_started) fail("robot_waits_for_human", "the robot waits for the human's first task");
      require_fillable(s, t, Agent::robot);
      const Color c = s.graph().task(t).color;
      s.to_robot.erase(it);
      start_fetch(s, Agent::robot, t, c, true);
      out.events.push_back(make_event(s, Agent::robot, r.kind, t, c, "started"));
      break;
    }

    case ActionKind::robot_reject_assignment: {
      const TaskId t = require_task(s, r);
      auto it = std::find_if(s.to_robot.begin(), s.to_robot.end(),
                             [&](const Assignment& a) { return a.task == t; });
      if (it == s.to_robot.end())
        fail("no_pending_assignment", fmt::format("the human has not assigned {}", label(s, t)));
      const auto color = it->color;
      s.to_robot.erase(it);
      out.events.push_back(make_event(s, Agent::robot, r.kind, t, color,
                                      r.note.empty() ? "rejected" : "rejected: " + r.note));
      break;
    }

    case ActionKind::robot_assign_to_human: {
      const TaskId t = require_task(s, r);
      if (s.to_human)
        fail("assignment_outstanding",
             fmt::format("{} is still assigned to the human", label(s, s.to_human->task)));
      require_fillable(s, t, Agent::human);
      if (!s.scenario->layout.reachable(Agent::human, s.graph().task(t).color))
        fail("unreachable_color", "human cannot fetch the color of this task");
      if (s.find_to_robot(t))
        fail("already_assigned", fmt::format("{} is assigned to the robot", label(s, t)));
      s.to_human = Assignment{t, s.graph().task(t).color, false};
      // A waiting human looks at the new assignment right away.
      s.agent(Agent::human).waiting_until.reset();
      out.events.push_back(make_event(s, Agent::robot, r.kind, t, std::nullopt, "pending"));
      break;
    }

    case ActionKind::robot_cancel_assignment: {
      const TaskId t = require_task(s, r);
      if (!s.to_human || s.to_human->task != t)
        fail("no_pending_assignment", fmt::format("{} is not assigned to the human", label(s, t)));
      s.to_human.reset();
      out.events.push_back(make_event(s, Agent::robot, r.kind, t, std::nullopt, "canceled"));
      break;
    }

    case ActionKind::pick:
    case ActionKind::place: break;  // rejected above
  }
  return out;
}

std::optional<double> next_phase_time(const SessionState& s) {
  double best = kNever;
  for (Agent a : kAllAgents) {
    const auto& st = s.agent(a);
    if (st.activity && st.activity->phase_end < best) best = st.activity->phase_end;
    if (st.waiting_until && *st.waiting_until < best) best = *st.waiting_until;
  }
  if (best == kNever) return std::nullopt;
  return best;
}

double remaining_busy(const SessionState& s, Agent a) {
  const auto& act = s.agent(a).activity;
  if (!act) return 0.0;
  const auto& timing = s.scenario->durations.of(a);
  const double leg = 0.5 * act->distance_m / timing.speed_mps;
  const double handoff = a == Agent::robot ? s.params.return_handoff_s : 0.0;
  const double left = act->phase_end == kNever ? 0.0 : std::max(0.0, act->phase_end - s.clock);
  switch (act->phase) {
    case Phase::think: return left + leg + timing.pick_s + leg + timing.place_s;
    case Phase::to_table: return left + timing.pick_s + leg + timing.place_s;
    case Phase::pick: return left + leg + timing.place_s;
    case Phase::to_workspace: return left + timing.place_s;
    case Phase::wait_workspace:
      return act->kind == Activity::Kind::fetch ? timing.place_s : timing.pick_s + handoff;
    case Phase::place: return left;
    case Phase::remove: return left + handoff;
    case Phase::handoff: return left;
  }
  return left;
}

void resolve_return(SessionState& s, TaskId t) {
  if (t.value < 0 || t.value >= static_cast<int>(s.graph().size()) || !s.misplaced[t.value])
    throw ContractViolation("resolve_return needs a misplaced task");
  s.misplaced[t.value] = false;
  s.spots[t.value].reset();
}

namespace {

void complete_phase(SessionState& s, Agent a, ApplyResult& out) {
  AgentState& st = s.agent(a);
  Activity& act = *st.activity;
  const auto& timing = s.scenario->durations.of(a);
  const double leg = 0.5 * act.distance_m / timing.speed_mps;
  switch (act.phase) {
    case Phase::think:
      act.phase = Phase::to_table;
      act.phase_end = s.clock + leg;
      break;
    case Phase::to_table:
      act.phase = Phase::pick;
      act.phase_end = s.clock + timing.pick_s;
      break;
    case Phase::pick:
      out.events.push_back(make_event(s, a, ActionKind::pick, act.task, act.color, "ok"));
      act.phase = Phase::to_workspace;
      act.phase_end = s.clock + leg;
      break;
    case Phase::to_workspace:
      if (auto wait = request_workspace(s, a)) out.events.push_back(*wait);
      break;
    case Phase::wait_workspace:
      throw InvariantViolation("waiting phase has no scheduled end");
    case Phase::place: {
      const TaskId t = act.task;
      const bool correct = act.color == s.graph().task(t).color;
      if (s.spots[t.value] || s.completed[t.value])
        throw InvariantViolation(fmt::format("{} filled twice", label(s, t)));
      for (TaskId p : s.graph().predecessors(t))
        if (!s.completed[p.value]) throw InvariantViolation("placement ahead of a predecessor");
      s.spots[t.value] = act.color;
      s.declined_offer.reset();
      if (correct)
        s.completed[t.value] = true;
      else
        s.misplaced[t.value] = true;
      ActionEvent e = make_event(s, a, ActionKind::place, t, act.color, correct ? "correct" : "wrong");
      e.distance_m = act.distance_m;
      e.workspace_from = act.workspace_from;
      out.events.push_back(e);
      if (a == Agent::human && !act.assigned)
        out.observations.push_back(
            {correct ? ObservationKind::placement_correct : ObservationKind::placement_wrong});
      st.activity.reset();
      release_workspace(s, a);
      break;
    }
    case Phase::remove: {
      const TaskId t = act.task;
      ActionEvent e = make_event(s, a, ActionKind::pick, t, act.color, "returned");
      e.workspace_from = act.workspace_from;
      out.events.push_back(e);
      resolve_return(s, t);
      s.declined_offer.reset();
      const double handoff = a == Agent::robot ? s.params.return_handoff_s : 0.0;
      if (handoff > 0.0) {
        act.phase = Phase::handoff;
        act.phase_end = s.clock + handoff;
      } else {
        st.activity.reset();
      }
      release_workspace(s, a);
      break;
    }
    case Phase::handoff:
      st.activity.reset();
      break;
  }
}

}  // namespace

ApplyResult advance_to(SessionState& s, double t) {
  ApplyResult out;
  if (t < s.clock) throw ContractViolation("clock cannot run backwards");
  s.clock = t;
  // Human first on ties; each agent may cross several zero-length boundaries.
  for (Agent a : kAllAgents) {
    AgentState& st = s.agent(a);
    if (st.waiting_until && *st.waiting_until <= t) st.waiting_until.reset();
    while (st.activity && st.activity->phase_end <= t) complete_phase(s, a, out);
  }
  // A release may have granted the workspace to an agent processed earlier.
  for (Agent a : kAllAgents) {
    AgentState& st = s.agent(a);
    while (st.activity && st.activity->phase_end <= t) complete_phase(s, a, out);
  }
  return out;
}

}  // namespace hrc
