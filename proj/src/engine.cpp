#include "hrc/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace hrc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

json metrics_to_json(const SessionMetrics& m) {
  return json{{"n_wrong_h", m.n_wrong_h},         {"n_assign_h_to_r", m.n_assign_h_to_r},
              {"n_assign_r_to_h", m.n_assign_r_to_h}, {"d_h", m.d_h},
              {"d_r", m.d_r},                     {"n_tasks_h", m.n_tasks_h},
              {"n_tasks_r", m.n_tasks_r},         {"t_total_min", m.t_total_min}};
}

SessionMetrics metrics_from_json(const json& j) {
  try {
    SessionMetrics m;
    m.n_wrong_h = j.at("n_wrong_h").get<int>();
    m.n_assign_h_to_r = j.at("n_assign_h_to_r").get<int>();
    m.n_assign_r_to_h = j.at("n_assign_r_to_h").get<int>();
    m.d_h = j.at("d_h").get<double>();
    m.d_r = j.at("d_r").get<double>();
    m.n_tasks_h = j.at("n_tasks_h").get<int>();
    m.n_tasks_r = j.at("n_tasks_r").get<int>();
    m.t_total_min = j.at("t_total_min").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw LogParseError(fmt::format("bad metrics record: {}", e.what()));
  }
}

std::string metrics_csv_header() {
  return "n_wrong_h,n_assign_h_to_r,n_assign_r_to_h,d_h,d_r,n_tasks_h,n_tasks_r,t_total_min";
}

std::string to_csv(const SessionMetrics& m) {
  return fmt::format("{},{},{},{},{},{},{},{}", m.n_wrong_h, m.n_assign_h_to_r, m.n_assign_r_to_h,
                     m.d_h, m.d_r, m.n_tasks_h, m.n_tasks_r, m.t_total_min);
}

namespace {

std::vector<std::string_view> split(std::string_view row, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = row.find(sep, start);
    out.push_back(row.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view text, const char* field) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ValidationError(field, fmt::format("'{}' is not a valid number", text));
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value) || value < 0) throw ValidationError(field, "must be finite and >= 0");
  } else {
    if (value < 0) throw ValidationError(field, "must be >= 0");
  }
  return value;
}

}  // namespace

SessionMetrics metrics_from_csv(std::string_view row) {
  const auto f = split(row, ',');
  if (f.size() != 8)
    throw ValidationError("metrics", fmt::format("expected 8 fields, got {}", f.size()));
  SessionMetrics m;
  m.n_wrong_h = parse_number<int>(f[0], "n_wrong_h");
  m.n_assign_h_to_r = parse_number<int>(f[1], "n_assign_h_to_r");
  m.n_assign_r_to_h = parse_number<int>(f[2], "n_assign_r_to_h");
  m.d_h = parse_number<double>(f[3], "d_h");
  m.d_r = parse_number<double>(f[4], "d_r");
  m.n_tasks_h = parse_number<int>(f[5], "n_tasks_h");
  m.n_tasks_r = parse_number<int>(f[6], "n_tasks_r");
  m.t_total_min = parse_number<double>(f[7], "t_total_min");
  return m;
}

std::vector<json> parse_log(std::string_view jsonl) {
  std::vector<json> out;
  std::size_t line_no = 0;
  for (std::string_view line : split(jsonl, '\n')) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw LogParseError(fmt::format("line {}: not a JSON object", line_no));
    out.push_back(std::move(j));
  }
  return out;
}

SessionMetrics compute_metrics(std::string_view jsonl) { return compute_metrics(parse_log(jsonl)); }

SessionMetrics compute_metrics(const std::vector<json>& records) {
  SessionMetrics m;
  double last_t = 0.0;
  for (const json& r : records) {
    try {
      if (r.at("type").get<std::string>() != "action") continue;
      const double t = r.at("t").get<double>();
      if (t < last_t) throw LogParseError("timestamps run backwards");
      last_t = t;
      const Agent agent = parse_agent(r.at("agent").get<std::string>());
      const ActionKind kind = parse_action_kind(r.at("kind").get<std::string>());
      switch (kind) {
        case ActionKind::human_assign_to_robot: ++m.n_assign_h_to_r; break;
        case ActionKind::robot_assign_to_human: ++m.n_assign_r_to_h; break;
        case ActionKind::place: {
          const double d = r.at("distance_m").get<double>();
          const bool wrong = r.at("outcome").get<std::string>() == "wrong";
          if (agent == Agent::human) {
            m.d_h += d;
            ++m.n_tasks_h;
            if (wrong) ++m.n_wrong_h;
          } else {
            m.d_r += d;
            ++m.n_tasks_r;
          }
          break;
        }
        default: break;
      }
    } catch (const json::exception& e) {
      throw LogParseError(fmt::format("record {}: {}", r.value("seq", -1), e.what()));
    } catch (const ValidationError& e) {
      throw LogParseError(fmt::format("record {}: {}", r.value("seq", -1), e.what()));
    }
  }
  m.t_total_min = last_t / 60.0;
  return m;
}

// ---------------------------------------------------------------------------
// Session

json variant_to_json(const PatternVariant& v) {
  json hints = json::array();
  for (const auto& h : v.hints)
    hints.push_back(h.second ? fmt::format("{}|{}", to_string(h.first), to_string(*h.second))
                             : std::string(to_string(h.first)));
  return json{{"difficulty", to_string(v.difficulty)},
              {"workspaces", v.workspaces},
              {"spots", v.spots},
              {"hints", hints}};
}

namespace {

json optional_label(const SessionState& s, const std::optional<TaskId>& t) {
  if (!t) return nullptr;
  return task_label(s.graph().task(*t));
}

json optional_color(const std::optional<Color>& c) {
  if (!c) return nullptr;
  return std::string(to_string(*c));
}

template <std::size_t N>
json array_of(const std::array<double, N>& a) {
  json out = json::array();
  for (double x : a) out.push_back(x);
  return out;
}

}  // namespace

Session::Session(std::shared_ptr<const Scenario> scenario, PatternVariant variant,
                 SessionOptions options, json header)
    : scenario_(scenario), state_(std::move(scenario), std::move(variant), options.engine),
      options_(std::move(options)) {
  options_.planner.costs.validate();
  options_.planner.estimator.validate();
  if (!header.is_object()) header = json::object();
  header["type"] = "header";
  header["schema"] = kLogSchema;
  header["variant"] = variant_to_json(state_.variant);
  append(std::move(header));
  const auto& b = state_.beliefs;
  append(json{{"type", "belief"},
              {"step", 0},
              {"decision", 0},
              {"pf", array_of(b.preference.pmf)},
              {"pe", array_of(b.performance.pmf)},
              {"e_pf", b.expected_follow()},
              {"e_pe", b.expected_error()},
              {"obs", json::array()}});
}

json& Session::append(json record) {
  record["seq"] = records_.size();
  record["t"] = state_.clock;
  records_.push_back(std::move(record));
  if (on_record) on_record(records_.back());
  return records_.back();
}

std::string Session::log_text() const {
  std::string out;
  for (const auto& r : records_) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void Session::absorb(const ApplyResult& result) {
  for (const ActionEvent& e : result.events) {
    json r{{"type", "action"},
           {"agent", to_string(e.agent)},
           {"kind", to_string(e.kind)},
           {"task", optional_label(state_, e.task)},
           {"color", optional_color(e.color)},
           {"outcome", e.outcome},
           {"distance_m", e.distance_m},
           {"ws_from", e.workspace_from ? json(*e.workspace_from) : json(nullptr)},
           {"e_pf", state_.beliefs.expected_follow()},
           {"e_pe", state_.beliefs.expected_error()}};
    append(std::move(r));
  }
  if (result.observations.empty()) return;
  json obs = json::array();
  for (const auto& o : result.observations) {
    state_.beliefs.apply(o, options_.planner.estimator);
    obs.push_back(to_string(o.kind));
  }
  ++state_.belief_steps;
  const auto& b = state_.beliefs;
  append(json{{"type", "belief"},
              {"step", state_.belief_steps},
              {"decision", batch_decision_.value_or(state_.human_decisions)},
              {"pf", array_of(b.preference.pmf)},
              {"pe", array_of(b.performance.pmf)},
              {"e_pf", b.expected_follow()},
              {"e_pe", b.expected_error()},
              {"obs", std::move(obs)}});
}

void Session::submit_human(const ActionRequest& request) {
  submit_human(std::vector<ActionRequest>{request});
}

void Session::submit_human(const std::vector<ActionRequest>& requests) {
  if (closed_) throw ProtocolError("session_finished", "the session is closed");
  for (const auto& request : requests)
    if (request.agent != Agent::human)
      throw ProtocolError("wrong_agent", "only human actions can be submitted");
  const bool fetches = std::any_of(requests.begin(), requests.end(), [](const ActionRequest& r) {
    return r.kind == ActionKind::human_select_task || r.kind == ActionKind::human_perform_assigned;
  });
  batch_decision_ = state_.human_decisions + (fetches ? 1 : 0);
  try {
    for (const auto& request : requests) absorb(apply_action(state_, request));
  } catch (...) {
    batch_decision_.reset();
    throw;
  }
  batch_decision_.reset();
  run_robot();
}

void Session::log_plan(const Plan& plan, std::string_view rationale) {
  json allocation = json::array();
  if (plan.allocation)
    for (const auto& e : plan.allocation->entries)
      allocation.push_back(json{{"task", task_label(state_.graph().task(e.task))},
                                {"agent", to_string(e.agent)},
                                {"mode", to_string(e.mode)},
                                {"cost", e.cost}});
  json gantt = json::array();
  for (const auto& row : plan.schedule.rows)
    gantt.push_back(json{{"task", task_label(state_.graph().task(row.task))},
                         {"agent", to_string(row.agent)},
                         {"s", row.start},
                         {"f", row.finish}});
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  json costs = json::array();
  for (const auto& row : plan.costs.rows)
    costs.push_back(json{{"task", task_label(state_.graph().task(row.task))},
                         {"human_explicit", opt(row.human_explicit)},
                         {"human_free", opt(row.human_free)},
                         {"robot", opt(row.robot)}});
  append(json{{"type", "plan"},
              {"allocation", std::move(allocation)},
              {"gantt", std::move(gantt)},
              {"costs", std::move(costs)},
              {"objective", plan.allocation ? json(plan.allocation->objective) : json(nullptr)},
              {"makespan", plan.schedule.makespan()},
              {"rationale", rationale}});
}

void Session::run_robot() {
  constexpr int kGuard = 64;
  for (int i = 0; i < kGuard; ++i) {
    if (state_.finished()) return;
    RobotDecision d = robot_controller_step(state_, options_.planner.costs);
    if (d.plan && options_.plan_observer) options_.plan_observer(*d.plan, state_);
    if (d.action.kind == ActionKind::wait) {
      // One wait record per idle stretch keeps the log readable.
      if (state_.robot_started && state_.agent(Agent::robot).idle() && !robot_wait_logged_) {
        absorb(apply_action(state_, d.action));
        robot_wait_logged_ = true;
      }
      return;
    }
    if (d.plan && options_.log_plans) log_plan(*d.plan, d.rationale);
    ApplyResult result;
    try {
      result = apply_action(state_, d.action);
    } catch (const ProtocolError& e) {
      throw InvariantViolation(fmt::format("robot issued an illegal {} ({}): {}",
                                           to_string(d.action.kind), e.rule(), e.what()));
    }
    robot_wait_logged_ = false;
    absorb(result);
  }
  throw InvariantViolation("robot controller did not settle");
}

void Session::advance_until(double t) {
  if (closed_) return;
  for (auto next = next_event_time(); next && *next <= t && !state_.finished();
       next = next_event_time()) {
    absorb(advance_to(state_, *next));
    run_robot();
  }
  if (state_.clock < t && !state_.finished()) advance_to(state_, t);
}

void Session::close(std::string_view status, std::string_view diagnostic) {
  if (closed_) return;
  closed_ = true;
  json r{{"type", "end"}, {"status", status}, {"metrics", metrics_to_json(compute_metrics(records_))}};
  if (!diagnostic.empty()) r["diagnostic"] = diagnostic;
  append(std::move(r));
}

// ---------------------------------------------------------------------------
// Batch runs

std::string SessionResult::log_text() const {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::string describe(const SessionState& s) {
  std::ostringstream os;
  os << "clock=" << s.clock << " correct=" << s.correct_placements() << "/" << s.graph().size();
  for (Agent a : kAllAgents) {
    const auto& act = s.agent(a).activity;
    os << ' ' << to_string(a) << '=';
    if (act)
      os << to_string(act->phase) << '@' << task_label(s.graph().task(act->task));
    else
      os << "idle";
  }
  return os.str();
}

}  // namespace

SessionResult run_session(const RunConfig& config, std::uint64_t seed) {
  if (!config.scenario) throw ContractViolation("run_session needs a scenario");
  config.policy.validate();
  PatternVariant variant =
      generate_variant(config.scenario->pattern, config.difficulty, seed, config.scenario->ambiguity);
  json header{{"seed", seed}, {"profile", config.profile}, {"difficulty", to_string(config.difficulty)}};
  Session session(config.scenario, std::move(variant), config.options, std::move(header));
  Rng rng = make_stream(seed, StreamId::human);
  HumanMemory memory;

  SessionResult result;
  const double cap = session.state().params.time_cap_s;
  while (!session.complete()) {
    const SessionState& st = session.state();
    const AgentState& human = st.agent(Agent::human);
    if (human.idle() && !human.waiting_until) {
      HumanDecision decision = human_policy_step(config.policy, st, rng, memory);
      try {
        session.submit_human(decision.actions);
      } catch (const ProtocolError& e) {
        throw InvariantViolation(fmt::format("scripted human issued an illegal action ({}): {}",
                                             e.rule(), e.what()));
      }
      continue;
    }
    const auto next = session.next_event_time();
    if (!next || *next > cap) {
      result.status = "aborted";
      result.diagnostic = fmt::format("{}: {}", next ? "time cap exceeded" : "no pending events",
                                      describe(st));
      session.close(result.status, result.diagnostic);
      result.metrics = compute_metrics(session.records());
      result.records = session.records();
      return result;
    }
    session.advance_until(*next);
  }
  result.status = "complete";
  session.close(result.status);
  result.metrics = compute_metrics(session.records());
  result.records = session.records();
  return result;
}

std::vector<BeliefPoint> belief_trajectory(const std::vector<json>& records) {
  std::vector<BeliefPoint> out;
  for (const json& r : records) {
    if (r.value("type", "") != "belief") continue;
    try {
      out.push_back(BeliefPoint{r.at("step").get<int>(), r.at("decision").get<int>(),
                                r.at("e_pf").get<double>(), r.at("e_pe").get<double>()});
    } catch (const json::exception& e) {
      throw LogParseError(fmt::format("belief record: {}", e.what()));
    }
  }
  if (out.empty()) throw LogParseError("log holds no belief snapshots");
  return out;
}

}  // namespace hrc
