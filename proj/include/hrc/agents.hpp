#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hrc/planner.hpp"
#include "hrc/protocol.hpp"
#include "hrc/random.hpp"

namespace hrc {

struct DriftPoint {
  int step = 0;  // belief step (see SessionState::belief_steps) from which the new rate applies
  double error_rate = 0.0;
};

struct HumanPolicy {
  // Probability of complying with a robot assignment, and of waiting for
  // one instead of self-initiating.
  double follow_bias = 0.5;
  // Probability that a self-chosen color is wrong.
  double error_rate = 0.0;
  // Probability of also handing a task to the robot when self-selecting.
  double assign_rate = 0.0;
  std::vector<DriftPoint> drift;

  void validate() const;
  double error_rate_at(int step) const;
};

enum class Profile { follow_high, follow_low, lead_high, lead_low, lead_drift };
inline constexpr std::array<Profile, 5> kAllProfiles{Profile::follow_high, Profile::follow_low,
                                                     Profile::lead_high, Profile::lead_low,
                                                     Profile::lead_drift};

std::string_view to_string(Profile p);
Profile parse_profile(std::string_view name);
HumanPolicy preset(Profile p);

// Scratch memory the scripted human carries between decisions.
struct HumanMemory {
  int consecutive_waits = 0;
};

struct HumanDecision {
  // Applied in order; the last one is a fetch or a wait.
  std::vector<ActionRequest> actions;
};

// One decision of the scripted human, taken while idle. Never proposes a
// placement that violates precedence or duplicates work in progress.
HumanDecision human_policy_step(const HumanPolicy& policy, const SessionState& state, Rng& rng,
                                HumanMemory& memory);

// Color a human would put on `task` when erring: the variant's other
// candidate on ambiguous spots, otherwise uniform over the remaining colors.
Color wrong_color(const SessionState& state, TaskId task, Rng& rng);

struct PlannerConfig {
  CostModel costs;
  EstimatorParams estimator;
};

struct RobotDecision {
  ActionRequest action;       // kind == wait when nothing to do
  std::optional<Plan> plan;   // plan behind the action, when one was computed
  std::string rationale;
};

PlanningContext planning_context(const SessionState& state, const CostModel& costs);

// Robot priority order: return a misplaced block, rule on a pending human
// assignment, start the next scheduled robot task, announce the human's next
// explicit task, otherwise wait. Physical steps are skipped while busy.
RobotDecision robot_controller_step(const SessionState& state, const CostModel& costs);

}  // namespace hrc
