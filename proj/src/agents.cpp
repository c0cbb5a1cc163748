#include "hrc/agents.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace hrc {

void HumanPolicy::validate() const {
  auto prob = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(field, "must lie in [0, 1]");
  };
  prob(follow_bias, "policy.follow_bias");
  prob(error_rate, "policy.error_rate");
  prob(assign_rate, "policy.assign_rate");
  for (std::size_t i = 0; i < drift.size(); ++i) {
    prob(drift[i].error_rate, "policy.drift.error_rate");
    if (drift[i].step < 0) throw ValidationError("policy.drift.step", "must be >= 0");
    if (i > 0 && drift[i].step <= drift[i - 1].step)
      throw ValidationError("policy.drift.step", "steps must be strictly increasing");
  }
}

double HumanPolicy::error_rate_at(int step) const {
  double rate = error_rate;
  for (const auto& d : drift)
    if (step >= d.step) rate = d.error_rate;
  return rate;
}

std::string_view to_string(Profile p) {
  switch (p) {
    case Profile::follow_high: return "follow_high";
    case Profile::follow_low: return "follow_low";
    case Profile::lead_high: return "lead_high";
    case Profile::lead_low: return "lead_low";
    case Profile::lead_drift: return "lead_drift";
  }
  return "?";
}

Profile parse_profile(std::string_view name) {
  for (Profile p : kAllProfiles)
    if (to_string(p) == name) return p;
  throw ValidationError("profile", fmt::format("unknown profile '{}'", name));
}

HumanPolicy preset(Profile p) {
  switch (p) {
    case Profile::follow_high: return {0.95, 0.02, 0.0, {}};
    case Profile::follow_low: return {0.95, 0.30, 0.0, {}};
    case Profile::lead_high: return {0.15, 0.02, 0.6, {}};
    case Profile::lead_low: return {0.15, 0.40, 0.6, {}};
    case Profile::lead_drift: return {0.15, 0.02, 0.6, {{8, 0.4}}};
  }
  return {};
}

Color wrong_color(const SessionState& state, TaskId task, Rng& rng) {
  const TaskSpec& spec = state.graph().task(task);
  const SpotHint& hint = state.variant.at(spec.workspace, spec.spot);
  if (hint.ambiguous()) return hint.first == spec.color ? *hint.second : hint.first;
  std::array<Color, 3> others{};
  std::size_t k = 0;
  for (Color c : kAllColors)
    if (c != spec.color) others[k++] = c;
  return others[uniform_index(rng, others.size())];
}

namespace {

Color chosen_color(const SessionState& state, TaskId task, double error_rate, Rng& rng) {
  if (bernoulli(rng, error_rate)) return wrong_color(state, task, rng);
  return state.graph().task(task).color;
}

// Colors stocked on the human's farthest table.
bool on_far_table(const SessionState& state, Color c) {
  const auto& tables = state.scenario->layout.agent(Agent::human).tables;
  const auto far = std::max_element(tables.begin(), tables.end(), [](const auto& a, const auto& b) {
    return a.distance_m < b.distance_m;
  });
  return far != tables.end() && std::find(far->colors.begin(), far->colors.end(), c) != far->colors.end();
}

ActionRequest request(Agent a, ActionKind k, std::optional<TaskId> t = std::nullopt,
                      std::optional<Color> c = std::nullopt) {
  ActionRequest r;
  r.agent = a;
  r.kind = k;
  r.task = t;
  r.color = c;
  return r;
}

void self_select(const HumanPolicy& policy, const SessionState& state, std::vector<TaskId> options,
                 Rng& rng, HumanDecision& out) {
  if (options.empty()) {
    out.actions.push_back(request(Agent::human, ActionKind::wait));
    return;
  }
  const double error_rate = policy.error_rate_at(state.belief_steps);
  const TaskId mine = options[uniform_index(rng, options.size())];
  const Color color = chosen_color(state, mine, error_rate, rng);

  if (bernoulli(rng, policy.assign_rate)) {
    std::vector<TaskId> rest, far;
    for (TaskId t : options) {
      if (t == mine || !state.scenario->layout.reachable(Agent::robot, state.graph().task(t).color))
        continue;
      rest.push_back(t);
      if (on_far_table(state, state.graph().task(t).color)) far.push_back(t);
    }
    // Leaders hand off what is far away for themselves.
    const auto& pool = far.empty() ? rest : far;
    if (!pool.empty()) {
      const TaskId theirs = pool[uniform_index(rng, pool.size())];
      out.actions.push_back(request(Agent::human, ActionKind::human_assign_to_robot, theirs,
                                    chosen_color(state, theirs, error_rate, rng)));
    }
  }
  out.actions.push_back(request(Agent::human, ActionKind::human_select_task, mine, color));
}

}  // namespace

HumanDecision human_policy_step(const HumanPolicy& policy, const SessionState& state, Rng& rng,
                                HumanMemory& memory) {
  HumanDecision out;
  std::vector<TaskId> options;
  for (TaskId t : state.available_tasks())
    if (!state.find_to_robot(t) && state.scenario->layout.reachable(Agent::human, state.graph().task(t).color))
      options.push_back(t);

  if (state.to_human) {
    const TaskId asked = state.to_human->task;
    if (bernoulli(rng, policy.follow_bias)) {
      memory.consecutive_waits = 0;
      out.actions.push_back(request(Agent::human, ActionKind::human_perform_assigned, asked));
      return out;
    }
    out.actions.push_back(request(Agent::human, ActionKind::human_cancel_assignment, asked));
    std::erase(options, asked);
    memory.consecutive_waits = 0;
    self_select(policy, state, std::move(options), rng, out);
    return out;
  }

  if (options.empty()) {
    out.actions.push_back(request(Agent::human, ActionKind::wait));
    return out;
  }
  if (state.robot_started && memory.consecutive_waits < state.params.max_consecutive_waits &&
      bernoulli(rng, policy.follow_bias)) {
    ++memory.consecutive_waits;
    out.actions.push_back(request(Agent::human, ActionKind::wait));
    return out;
  }
  memory.consecutive_waits = 0;
  self_select(policy, state, std::move(options), rng, out);
  return out;
}

// ---------------------------------------------------------------------------
// Robot controller

PlanningContext planning_context(const SessionState& state, const CostModel& costs) {
  PlanningContext ctx;
  ctx.scenario = state.scenario.get();
  ctx.beliefs = state.beliefs;
  ctx.costs = costs;
  if (state.to_human) ctx.pending_for_human.push_back(state.to_human->task);
  for (const auto& a : state.to_robot)
    if (a.accepted) ctx.forced_robot.push_back(a.task);
  for (Agent a : kAllAgents) ctx.ready[index_of(a)] = remaining_busy(state, a);
  return ctx;
}

RobotDecision robot_controller_step(const SessionState& state, const CostModel& costs) {
  RobotDecision d;
  d.action = request(Agent::robot, ActionKind::wait);
  if (state.finished()) {
    d.rationale = "session complete";
    return d;
  }
  if (!state.robot_started) {
    d.rationale = "waiting for the human's first task";
    return d;
  }
  const bool idle = state.agent(Agent::robot).idle();

  if (idle) {
    for (std::size_t i = 0; i < state.misplaced.size(); ++i) {
      const TaskId t{static_cast<int>(i)};
      if (state.misplaced[i] && !state.being_removed(t)) {
        d.action = request(Agent::robot, ActionKind::robot_return_object, t);
        d.rationale = "misplaced block";
        return d;
      }
    }
  }

  const PlanningContext ctx = planning_context(state, costs);
  const std::vector<TaskId> tasks = state.available_tasks();

  for (const auto& a : state.to_robot) {
    if (a.accepted) continue;
    const AssignmentDecision verdict = evaluate_human_assignment(a.task, a.color, tasks, ctx);
    if (verdict.verdict == Verdict::accept) {
      d.action = request(Agent::robot, ActionKind::robot_perform_assigned, a.task);
      d.rationale = fmt::format("accept (inflation {:.3f})", verdict.inflation);
    } else {
      d.action = request(Agent::robot, ActionKind::robot_reject_assignment, a.task);
      d.action.note = verdict.reason;
      d.rationale = "reject: " + verdict.reason;
    }
    return d;
  }

  Plan plan = plan_cycle(tasks, ctx);
  if (state.to_human && plan.allocation) {
    const auto* e = plan.allocation->find(state.to_human->task);
    if (e && e->agent == Agent::robot) {
      d.action = request(Agent::robot, ActionKind::robot_cancel_assignment, state.to_human->task);
      d.rationale = "re-plan moved the task to the robot";
      d.plan = std::move(plan);
      return d;
    }
  }

  if (idle && plan.next.kind == NextActionKind::task) {
    const TaskId t = *plan.next.task;
    const bool from_human = state.find_to_robot(t) != nullptr;
    d.action = request(Agent::robot,
                       from_human ? ActionKind::robot_perform_assigned : ActionKind::robot_select_task, t);
    d.rationale = from_human ? "perform accepted human assignment" : "next scheduled robot task";
    d.plan = std::move(plan);
    return d;
  }

  if (!state.to_human && plan.allocation) {
    const ScheduledTask* next_human = nullptr;
    for (const auto& row : plan.schedule.rows) {
      if (row.agent != Agent::human) continue;
      const auto* e = plan.allocation->find(row.task);
      if (!e || e->mode != AssignmentMode::explicit_assignment) continue;
      if (state.declined_offer && *state.declined_offer == row.task) continue;
      if (!next_human || row.start < next_human->start) next_human = &row;
    }
    if (next_human) {
      d.action = request(Agent::robot, ActionKind::robot_assign_to_human, next_human->task);
      d.rationale = "announce the human's next task";
      d.plan = std::move(plan);
      return d;
    }
  }

  d.rationale = plan.allocation ? "nothing for the robot now" : "no available tasks";
  d.plan = std::move(plan);
  return d;
}

}  // namespace hrc
