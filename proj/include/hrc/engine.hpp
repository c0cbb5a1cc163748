#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hrc/agents.hpp"
#include "hrc/protocol.hpp"

namespace hrc {

inline constexpr std::string_view kLogSchema = "hrc.log.v1";

struct SessionMetrics {
  int n_wrong_h = 0;
  int n_assign_h_to_r = 0;
  int n_assign_r_to_h = 0;
  double d_h = 0.0;  // meters
  double d_r = 0.0;
  int n_tasks_h = 0;
  int n_tasks_r = 0;
  double t_total_min = 0.0;

  bool operator==(const SessionMetrics&) const = default;
};

nlohmann::json metrics_to_json(const SessionMetrics& m);
SessionMetrics metrics_from_json(const nlohmann::json& j);

// Comma-separated form, columns as in metrics_csv_header(). Doubles use the
// shortest representation that reads back to the same value.
std::string metrics_csv_header();
std::string to_csv(const SessionMetrics& m);
// Accepts exactly eight comma-separated fields. Throws ValidationError.
SessionMetrics metrics_from_csv(std::string_view row);

// A log line that does not parse or lacks a required field.
class LogParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pure fold over the action records of a log; other record types are
// skipped. Accepts the JSONL text or parsed records.
SessionMetrics compute_metrics(std::string_view jsonl);
SessionMetrics compute_metrics(const std::vector<nlohmann::json>& records);

std::vector<nlohmann::json> parse_log(std::string_view jsonl);

// {"difficulty", "workspaces", "spots", "hints": ["green", "blue|pink", ...]}
nlohmann::json variant_to_json(const PatternVariant& v);

struct SessionOptions {
  PlannerConfig planner;
  EngineParams engine;
  bool log_plans = true;
  // Sees every plan the robot computes, logged or not.
  std::function<void(const Plan&, const SessionState&)> plan_observer;
};

// One collaboration: state, robot controller and log. Used by batch runs and
// by the interactive service alike. Not thread-safe; callers serialize.
class Session {
 public:
  Session(std::shared_ptr<const Scenario> scenario, PatternVariant variant, SessionOptions options,
          nlohmann::json header);

  const SessionState& state() const { return state_; }
  const std::vector<nlohmann::json>& records() const { return records_; }
  std::string log_text() const;
  bool complete() const { return state_.finished(); }

  // Applies a human protocol action, updates beliefs, then lets the robot
  // react. Throws ProtocolError and leaves the session unchanged when the
  // action is illegal.
  void submit_human(const ActionRequest& request);
  // Applies one whole human decision before the robot reacts, so the robot
  // cannot slip in between its parts. Stops at the first illegal action.
  void submit_human(const std::vector<ActionRequest>& requests);

  std::optional<double> next_event_time() const { return next_phase_time(state_); }
  // Processes every phase boundary up to and including `t`, letting the
  // robot react after each one; the clock ends at `t`.
  void advance_until(double t);

  // Appends the closing record. Idempotent.
  void close(std::string_view status, std::string_view diagnostic = {});
  bool closed() const { return closed_; }

  // Called after every appended record.
  std::function<void(const nlohmann::json&)> on_record;

 private:
  void absorb(const ApplyResult& result);
  void run_robot();
  void log_plan(const Plan& plan, std::string_view rationale);
  nlohmann::json& append(nlohmann::json record);

  std::shared_ptr<const Scenario> scenario_;
  SessionState state_;
  SessionOptions options_;
  std::vector<nlohmann::json> records_;
  bool robot_wait_logged_ = false;
  // Decision number stamped on belief records while a human batch is applied.
  std::optional<int> batch_decision_;
  bool closed_ = false;
};

struct RunConfig {
  std::shared_ptr<const Scenario> scenario;
  HumanPolicy policy;
  std::string profile = "custom";
  Difficulty difficulty = Difficulty::medium;
  SessionOptions options;
};

struct SessionResult {
  std::string status;  // "complete" or "aborted"
  std::string diagnostic;
  SessionMetrics metrics;
  std::vector<nlohmann::json> records;

  std::string log_text() const;
};

// Batch session driven by the scripted human. Aborts (status "aborted") when
// the clock passes the time cap or nothing is left to happen.
SessionResult run_session(const RunConfig& config, std::uint64_t seed);

struct BeliefPoint {
  int step = 0;
  int decision = 0;
  double e_pf = 0.0;
  double e_pe = 0.0;
};

// Belief snapshots of one log in order. Throws LogParseError when the log
// has none.
std::vector<BeliefPoint> belief_trajectory(const std::vector<nlohmann::json>& records);

}  // namespace hrc
