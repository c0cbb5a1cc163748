#include <algorithm>
#include <map>

#include "doctest.h"
#include "support.hpp"

using namespace hrc;
using nlohmann::json;

namespace {

SessionState fresh_state(std::uint64_t seed = 1) {
  const auto sc = testing::default_scenario();
  return SessionState(sc, generate_variant(sc->pattern, Difficulty::medium, seed), EngineParams{});
}

ActionRequest human(ActionKind k, int task, std::optional<Color> c = std::nullopt) {
  return ActionRequest{Agent::human, k, TaskId{task}, c, {}};
}

Color other_color(Color c) { return c == Color::green ? Color::orange : Color::green; }

// Advances until `who` is idle; returns everything that happened.
ApplyResult run_until_idle(SessionState& s, Agent who) {
  ApplyResult all;
  while (!s.agent(who).idle()) {
    const auto t = next_phase_time(s);
    REQUIRE(t);
    auto r = advance_to(s, *t);
    all.events.insert(all.events.end(), r.events.begin(), r.events.end());
    all.observations.insert(all.observations.end(), r.observations.begin(), r.observations.end());
  }
  return all;
}

RunConfig config_for(Profile p) {
  RunConfig cfg;
  cfg.scenario = testing::default_scenario();
  cfg.policy = preset(p);
  cfg.profile = std::string(to_string(p));
  return cfg;
}

// Drives a Session the way run_session does and returns it for inspection.
Session drive(Profile p, std::uint64_t seed) {
  const auto sc = testing::default_scenario();
  Session session(sc, generate_variant(sc->pattern, Difficulty::medium, seed), SessionOptions{},
                  json::object());
  Rng rng = make_stream(seed, StreamId::human);
  HumanMemory mem;
  while (!session.complete()) {
    const auto& h = session.state().agent(Agent::human);
    if (h.idle() && !h.waiting_until) {
      session.submit_human(human_policy_step(preset(p), session.state(), rng, mem).actions);
      continue;
    }
    const auto next = session.next_event_time();
    REQUIRE(next);
    session.advance_until(*next);
  }
  session.close("complete");
  return session;
}

struct Interval {
  double from, to;
  Agent agent;
};

std::vector<Interval> workspace_intervals(const std::vector<json>& records) {
  std::vector<Interval> out;
  for (const auto& r : records) {
    if (r.value("type", "") != "action" || r.at("ws_from").is_null()) continue;
    out.push_back({r.at("ws_from").get<double>(), r.at("t").get<double>(),
                   parse_agent(r.at("agent").get<std::string>())});
  }
  return out;
}

}  // namespace

TEST_CASE("a correct human placement completes the task") {
  SessionState s = fresh_state();
  const Color truth = s.graph().task(TaskId{0}).color;
  const auto started = apply_action(s, human(ActionKind::human_select_task, 0, truth));
  CHECK(started.observations.empty());  // the opening move carries no preference signal
  const auto done = run_until_idle(s, Agent::human);
  CHECK(s.completed[0]);
  CHECK(s.spots[0] == truth);
  REQUIRE(done.observations.size() == 1);
  CHECK(done.observations[0].kind == ObservationKind::placement_correct);
  const auto place = std::find_if(done.events.begin(), done.events.end(),
                                  [](const auto& e) { return e.kind == ActionKind::place; });
  REQUIRE(place != done.events.end());
  CHECK(place->outcome == "correct");
  CHECK(place->distance_m == travel_distance(s.scenario->layout, Agent::human, truth));
}

TEST_CASE("a wrong human placement is flagged") {
  SessionState s = fresh_state();
  const Color truth = s.graph().task(TaskId{0}).color;
  apply_action(s, human(ActionKind::human_select_task, 0, other_color(truth)));
  const auto done = run_until_idle(s, Agent::human);
  CHECK(s.misplaced[0]);
  CHECK_FALSE(s.completed[0]);
  REQUIRE(done.observations.size() == 1);
  CHECK(done.observations[0].kind == ObservationKind::placement_wrong);
  // The occupied spot cannot be filled again until it is cleared.
  try {
    apply_action(s, human(ActionKind::human_select_task, 0, truth));
    FAIL("refilled an occupied spot");
  } catch (const ProtocolError& e) {
    CHECK(e.rule() == "spot_occupied");
  }
}

TEST_CASE("protocol guards name the violated rule") {
  SessionState s = fresh_state();
  auto rule_of = [&](const ActionRequest& r) -> std::string {
    try {
      apply_action(s, r);
    } catch (const ProtocolError& e) {
      return e.rule();
    }
    return "";
  };
  CHECK(rule_of(human(ActionKind::human_select_task, 2, Color::green)) == "precedence");
  CHECK(rule_of(human(ActionKind::human_select_task, 0)) == "missing_color");
  CHECK(rule_of(human(ActionKind::human_select_task, 77, Color::green)) == "unknown_task");
  CHECK(rule_of(human(ActionKind::human_perform_assigned, 0)) == "no_pending_assignment");
  CHECK(rule_of(ActionRequest{Agent::human, ActionKind::robot_select_task, TaskId{0}, {}, {}}) ==
        "wrong_agent");
  CHECK(rule_of(ActionRequest{Agent::human, ActionKind::place, TaskId{0}, {}, {}}) == "sub_event");

  const SessionState before = s;
  apply_action(s, human(ActionKind::human_select_task, 0, s.graph().task(TaskId{0}).color));
  CHECK(rule_of(human(ActionKind::human_select_task, 5, Color::green)) == "agent_busy");
  CHECK(rule_of(ActionRequest{Agent::robot, ActionKind::robot_select_task, TaskId{0}, {}, {}}) ==
        "task_in_progress");
  CHECK(before.clock == s.clock);
}

TEST_CASE("an illegal action leaves the state untouched") {
  SessionState s = fresh_state();
  const auto spots = s.spots;
  CHECK_THROWS_AS(apply_action(s, human(ActionKind::human_select_task, 3, Color::green)), ProtocolError);
  CHECK(s.spots == spots);
  CHECK(s.agent(Agent::human).idle());
  CHECK_FALSE(s.robot_started);
}

TEST_CASE("resolve_return clears the spot") {
  SessionState s = fresh_state();
  s.spots[5] = other_color(s.graph().task(TaskId{5}).color);
  s.misplaced[5] = true;
  const auto before = s.available_tasks();
  CHECK(std::find(before.begin(), before.end(), TaskId{5}) == before.end());
  resolve_return(s, TaskId{5});
  CHECK_FALSE(s.spots[5]);
  CHECK_FALSE(s.misplaced[5]);
  const auto after = s.available_tasks();
  CHECK(std::find(after.begin(), after.end(), TaskId{5}) != after.end());
  CHECK_THROWS_AS(resolve_return(s, TaskId{5}), ContractViolation);
}

TEST_CASE("two misplaced blocks are both returned before the robot picks") {
  SessionState s = fresh_state();
  s.robot_started = true;
  for (int t : {0, 10}) {
    s.spots[t] = other_color(s.graph().task(TaskId{t}).color);
    s.misplaced[t] = true;
  }
  std::vector<ActionRequest> issued;
  for (int guard = 0; guard < 50 && issued.size() < 3; ++guard) {
    const auto d = robot_controller_step(s, CostModel{});
    if (d.action.kind == ActionKind::wait) {
      const auto t = next_phase_time(s);
      REQUIRE(t);
      advance_to(s, *t);
      continue;
    }
    apply_action(s, d.action);
    issued.push_back(d.action);
    run_until_idle(s, Agent::robot);
  }
  REQUIRE(issued.size() == 3);
  CHECK(issued[0].kind == ActionKind::robot_return_object);
  CHECK(issued[1].kind == ActionKind::robot_return_object);
  CHECK(issued[0].task != issued[1].task);
  CHECK(issued[2].kind != ActionKind::robot_return_object);
  CHECK_FALSE(s.misplaced[0]);
  CHECK_FALSE(s.misplaced[10]);
}

TEST_CASE("the shared workspace is taken one agent at a time") {
  SessionState s = fresh_state();
  s.robot_started = true;
  // Both agents head for the workspace at once.
  apply_action(s, human(ActionKind::human_select_task, 0, s.graph().task(TaskId{0}).color));
  apply_action(s, ActionRequest{Agent::robot, ActionKind::robot_select_task, TaskId{5}, {}, {}});
  bool saw_wait = false;
  while (!(s.agent(Agent::human).idle() && s.agent(Agent::robot).idle())) {
    const auto r = advance_to(s, *next_phase_time(s));
    for (const auto& e : r.events) saw_wait = saw_wait || e.outcome == "workspace_busy";
    int at_workspace = 0;
    for (Agent a : kAllAgents) {
      const auto& act = s.agent(a).activity;
      at_workspace += act && (act->phase == Phase::place || act->phase == Phase::remove);
    }
    CHECK(at_workspace <= 1);
  }
  CHECK(s.completed[0]);
  CHECK(s.completed[5]);
  (void)saw_wait;
}

TEST_CASE("follow_high sessions make no assignments to the robot") {
  int clean = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = run_session(config_for(Profile::follow_high), seed);
    REQUIRE(r.status == "complete");
    CHECK(r.metrics.n_assign_h_to_r == 0);
    clean += r.metrics.n_wrong_h == 0;
  }
  CHECK(clean >= 16);
}

TEST_CASE("a completed session matches the pattern and obeys the log invariants") {
  for (Profile p : {Profile::follow_low, Profile::lead_low}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Session session = drive(p, seed);
      const auto& st = session.state();
      for (const auto& task : st.graph().tasks()) {
        CHECK(st.spots[task.id.value] == task.color);
        CHECK(st.completed[task.id.value]);
      }
      CHECK(st.correct_placements() == 20);

      const auto& records = session.records();
      CHECK(records.front().at("type") == "header");
      CHECK(records.back().at("type") == "end");

      // Single source of truth: metrics from the serialized text equal the end record.
      const SessionMetrics m = compute_metrics(session.log_text());
      CHECK(m == metrics_from_json(records.back().at("metrics")));
      CHECK(m.n_tasks_h + m.n_tasks_r >= 20);
      CHECK(m.t_total_min > 0.0);

      // Clock monotone, t_total is the last action time.
      double last = 0.0, last_action = 0.0;
      std::uint64_t seq = 0;
      for (const auto& r : records) {
        CHECK(r.at("seq").get<std::uint64_t>() == seq++);
        const double t = r.at("t").get<double>();
        CHECK(t >= last);
        last = t;
        if (r.at("type") == "action") last_action = t;
      }
      CHECK(m.t_total_min == last_action / 60.0);

      // Mutual exclusion on the shared workspace.
      const auto iv = workspace_intervals(records);
      for (std::size_t i = 0; i < iv.size(); ++i)
        for (std::size_t j = i + 1; j < iv.size(); ++j)
          CHECK_FALSE((iv[i].from < iv[j].to && iv[j].from < iv[i].to));

      // Conservation per spot: correct placements minus returns is 0 or 1 at every prefix.
      std::map<std::string, int> balance;
      for (const auto& r : records) {
        if (r.value("type", "") != "action") continue;
        const std::string kind = r.at("kind");
        const std::string outcome = r.at("outcome");
        if (kind == "place") {
          const std::string task = r.at("task");
          if (outcome == "correct") ++balance[task];
          CHECK(balance[task] <= 1);
        }
        if (kind == "pick" && outcome == "returned") {
          const std::string task = r.at("task");
          CHECK(balance[task] == 0);  // only wrong blocks are ever returned
        }
      }
      for (const auto& [task, n] : balance) CHECK(n == 1);
      CHECK(balance.size() == 20);
    }
  }
}

TEST_CASE("closing twice appends one end record") {
  const auto sc = testing::default_scenario();
  Session s(sc, generate_variant(sc->pattern, Difficulty::easy, 1), SessionOptions{}, json::object());
  s.close("aborted", "test");
  s.close("complete");
  const auto n = std::count_if(s.records().begin(), s.records().end(),
                               [](const json& r) { return r.at("type") == "end"; });
  CHECK(n == 1);
  CHECK(s.records().back().at("status") == "aborted");
  CHECK_THROWS(s.submit_human(human(ActionKind::human_select_task, 0, Color::green)));
}

TEST_CASE("the session refuses robot actions from the human channel") {
  const auto sc = testing::default_scenario();
  Session s(sc, generate_variant(sc->pattern, Difficulty::easy, 1), SessionOptions{}, json::object());
  try {
    s.submit_human(ActionRequest{Agent::robot, ActionKind::robot_select_task, TaskId{0}, {}, {}});
    FAIL("robot action accepted");
  } catch (const ProtocolError& e) {
    CHECK(e.rule() == "wrong_agent");
  }
}

TEST_CASE("compute_metrics examples") {
  CHECK(compute_metrics("") == SessionMetrics{});
  const std::string one =
      R"({"type":"action","seq":0,"t":34.0,"agent":"human","kind":"place","task":"W1S1","color":"blue","outcome":"correct","distance_m":22.0})"
      "\n";
  const SessionMetrics m = compute_metrics(one);
  CHECK(m.d_h == 22.0);
  CHECK(m.n_tasks_h == 1);
  CHECK(m.n_wrong_h == 0);
  CHECK(m.t_total_min == doctest::Approx(34.0 / 60.0));

  CHECK_THROWS_AS(compute_metrics("{not json\n"), LogParseError);
  CHECK_THROWS_AS(compute_metrics(R"({"type":"action","t":1})"), LogParseError);
  CHECK_THROWS_AS(compute_metrics(R"({"type":"action","t":5,"agent":"human","kind":"wait"})"
                                  "\n"
                                  R"({"type":"action","t":4,"agent":"human","kind":"wait"})"),
                  LogParseError);
}

TEST_CASE("metric table rows round-trip") {
  const SessionMetrics lead_low = metrics_from_csv("8,7,12,300,64,14,10,13.1");
  CHECK(lead_low.n_wrong_h == 8);
  CHECK(lead_low.n_assign_h_to_r == 7);
  CHECK(lead_low.n_assign_r_to_h == 12);
  CHECK(lead_low.d_h == 300.0);
  CHECK(lead_low.d_r == 64.0);
  CHECK(lead_low.n_tasks_h == 14);
  CHECK(lead_low.n_tasks_r == 10);
  CHECK(lead_low.t_total_min == 13.1);
  CHECK(metrics_from_csv(to_csv(lead_low)) == lead_low);
  CHECK(metrics_from_json(metrics_to_json(lead_low)) == lead_low);
  CHECK_THROWS_AS(metrics_from_csv("1,2,3"), ValidationError);
  CHECK_THROWS_AS(metrics_from_csv("8,7,12,300,64,14,10,x"), ValidationError);
  CHECK_THROWS_AS(metrics_from_csv("-1,7,12,300,64,14,10,13.1"), ValidationError);

  testing::Gen g(8);
  for (int i = 0; i < 200; ++i) {
    SessionMetrics m{g.integer(0, 30), g.integer(0, 30), g.integer(0, 30), g.real(0, 500),
                     g.real(0, 500),   g.integer(0, 40), g.integer(0, 40), g.real(0, 60)};
    CHECK(metrics_from_csv(to_csv(m)) == m);
  }
}

TEST_CASE("identical seeds give identical logs") {
  for (Profile p : kAllProfiles) {
    const auto a = run_session(config_for(p), 42);
    const auto b = run_session(config_for(p), 42);
    CHECK(a.log_text() == b.log_text());
  }
  CHECK(run_session(config_for(Profile::lead_low), 1).log_text() !=
        run_session(config_for(Profile::lead_low), 2).log_text());
}

TEST_CASE("belief snapshots follow the human's decisions") {
  const auto r = run_session(config_for(Profile::lead_high), 3);
  const auto traj = belief_trajectory(r.records);
  REQUIRE(traj.size() > 1);
  CHECK(traj.front().step == 0);
  CHECK(traj.front().e_pf == doctest::Approx(0.8));
  CHECK(traj.front().e_pe == doctest::Approx(0.1));
  for (std::size_t i = 1; i < traj.size(); ++i) {
    CHECK(traj[i].step == traj[i - 1].step + 1);
    CHECK(traj[i].decision >= traj[i - 1].decision);
    // Only the prior sits at decision zero, even when the first batch also
    // hands a task to the robot.
    CHECK(traj[i].decision >= 1);
  }
  CHECK_THROWS_AS(belief_trajectory({}), LogParseError);
}

TEST_CASE("a session past the time cap aborts with a diagnostic") {
  RunConfig cfg = config_for(Profile::lead_low);
  cfg.options.engine.time_cap_s = 30.0;
  const auto r = run_session(cfg, 1);
  CHECK(r.status == "aborted");
  CHECK_FALSE(r.diagnostic.empty());
  CHECK(r.records.back().at("status") == "aborted");
}
