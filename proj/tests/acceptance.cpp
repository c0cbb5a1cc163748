// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Every check runs at its stated tolerance.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "hrc/experiment.hpp"
#include "support.hpp"

using namespace hrc;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  fmt::print("[{}] criterion {}: {} ({:.1f} s) {}\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail);
  std::fflush(stdout);
}

RunConfig config_for(Profile p) {
  RunConfig cfg;
  cfg.scenario = testing::default_scenario();
  cfg.policy = preset(p);
  cfg.profile = std::string(to_string(p));
  cfg.options.log_plans = false;
  return cfg;
}

std::vector<SessionResult> sessions(Profile p, int n, std::uint64_t base_seed = 1) {
  ExperimentConfig base;
  apply_profile(base, to_string(p));
  ExperimentGrid grid;
  grid.cells = {GridCell{base, n, base_seed}};
  const GridResult r = run_grid(grid, {0, true, false});
  std::vector<SessionResult> out;
  for (const auto& row : r.rows) {
    if (row.status != "complete") throw std::runtime_error(fmt::format("{} seed {} {}", row.profile, row.seed, row.status));
    out.push_back(SessionResult{row.status, row.diagnostic, row.metrics, row.records});
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome belief_contracts() {
  const auto pref = init_preference_belief();
  const auto perf = init_performance_belief();
  if (std::abs(pref.pmf[5] - 0.32768) > 1e-15) return {false, fmt::format("pref[5] = {}", pref.pmf[5])};
  if (std::abs(perf.pmf[0] - std::pow(0.9, 10)) > 1e-12) return {false, fmt::format("perf[0] = {}", perf.pmf[0])};

  testing::Gen g(1);
  const EstimatorParams params;
  constexpr std::array<ObservationKind, 4> pref_kinds{
      ObservationKind::complied_with_assignment, ObservationKind::self_selected_task,
      ObservationKind::assigned_task_to_robot, ObservationKind::canceled_robot_assignment};
  int updates = 0;
  auto check_pmf = [](const auto& pmf) {
    double total = 0.0;
    for (double x : pmf) {
      if (!(x >= 0.0)) return false;
      total += x;
    }
    return std::abs(total - 1.0) <= 1e-9;
  };
  // Random beliefs plus belief chains started at the priors.
  for (int chain = 0; chain < 200; ++chain) {
    PreferenceBelief b = chain % 2 ? init_preference_belief() : PreferenceBelief{testing::random_pmf<6>(g)};
    PerformanceBelief e = chain % 2 ? init_performance_belief() : PerformanceBelief{testing::random_pmf<11>(g)};
    for (int step = 0; step < 100; ++step, ++updates) {
      const auto kind = pref_kinds[g.integer(0, 3)];
      const auto pred = predict(b.pmf, params.stay_probability);
      double base = 0.0;
      for (std::size_t i = 0; i < 6; ++i) base += pred[i] * kPreferenceSupport[i];
      const auto next = update_belief(b, {kind}, params);
      if (!check_pmf(next.pmf)) return {false, "preference update lost normalization"};
      const bool up = kind == ObservationKind::complied_with_assignment;
      if (up ? next.expectation() < base - 1e-12 : next.expectation() > base + 1e-12)
        return {false, fmt::format("E[p_f] moved the wrong way after {}", to_string(kind))};
      b = next;

      const bool wrong = g.coin();
      const auto epred = predict(e.pmf, params.stay_probability);
      double ebase = 0.0;
      for (std::size_t i = 0; i < 11; ++i) ebase += epred[i] * kPerformanceSupport[i];
      const auto enext =
          update_belief(e, {wrong ? ObservationKind::placement_wrong : ObservationKind::placement_correct}, params);
      if (!check_pmf(enext.pmf)) return {false, "performance update lost normalization"};
      if (wrong ? enext.expectation() < ebase - 1e-12 : enext.expectation() > ebase + 1e-12)
        return {false, "E[p_e] moved the wrong way"};
      e = enext;
    }
  }
  return {true, fmt::format("priors exact; {} update pairs normalized and monotone", updates)};
}

Outcome solver_oracles() {
  testing::Gen g(2);
  for (int i = 0; i < 500; ++i) {
    const CostTable t = testing::random_cost_table(g, g.integer(1, 6));
    const double got = select_allocation(t).objective;
    const double want = testing::brute_force_allocation(t).objective;
    if (got != want) return {false, fmt::format("allocation instance {}: {} vs oracle {}", i, got, want)};
  }
  for (int i = 0; i < 500; ++i) {
    const auto p = testing::random_scheduling_problem(g, g.integer(1, 5));
    const double got = schedule(p).makespan();
    const double want = testing::brute_force_makespan(p);
    if (got != want) return {false, fmt::format("schedule instance {}: {} vs oracle {}", i, got, want)};
  }
  return {true, "500 allocations and 500 schedules equal their oracles"};
}

Outcome schedule_validity() {
  const auto sc = testing::default_scenario();
  long plans = 0;
  std::string first_error;
  for (int run = 0; run < 100; ++run) {
    RunConfig cfg = config_for(kAllProfiles[run % kAllProfiles.size()]);
    cfg.options.plan_observer = [&](const Plan& plan, const SessionState& state) {
      ++plans;
      const PlanningContext ctx = planning_context(state, cfg.options.planner.costs);
      const auto problem = testing::problem_of(plan, *sc, ctx.ready);
      const std::string err = testing::schedule_violation(plan.schedule, problem);
      if (!err.empty() && first_error.empty()) first_error = fmt::format("run {} t={}: {}", run, state.clock, err);
      if (plan.allocation && plan.allocation->entries.size() != state.available_tasks().size() &&
          first_error.empty())
        first_error = fmt::format("run {}: allocation does not cover the available tasks", run);
    };
    const auto r = run_session(cfg, static_cast<std::uint64_t>(run + 1));
    if (r.status != "complete") return {false, fmt::format("run {} {}", run, r.status)};
  }
  if (!first_error.empty()) return {false, first_error};
  return {true, fmt::format("{} plans over 100 sessions valid", plans)};
}

// Share of bootstrap resamples in which `holds` is true of the resampled means.
double bootstrap(const std::map<Profile, std::vector<double>>& data,
                 const std::function<bool(const std::map<Profile, double>&)>& holds, Rng& rng, int B = 1000) {
  int ok = 0;
  for (int b = 0; b < B; ++b) {
    std::map<Profile, double> means;
    for (const auto& [p, xs] : data) {
      double s = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) s += xs[uniform_index(rng, xs.size())];
      means[p] = s / static_cast<double>(xs.size());
    }
    ok += holds(means);
  }
  return static_cast<double>(ok) / B;
}

Outcome table_orderings() {
  const std::array<Profile, 4> profiles{Profile::follow_high, Profile::follow_low, Profile::lead_low,
                                        Profile::lead_high};
  std::map<Profile, std::vector<double>> t_total, wrong, h2r, r2h;
  for (Profile p : profiles) {
    for (const auto& r : sessions(p, 100)) {
      t_total[p].push_back(r.metrics.t_total_min);
      wrong[p].push_back(r.metrics.n_wrong_h);
      h2r[p].push_back(r.metrics.n_assign_h_to_r);
      r2h[p].push_back(r.metrics.n_assign_r_to_h);
    }
  }
  Rng rng = make_stream(4, 0xb007);
  auto is_min = [&](Profile who) {
    return [who, &profiles](const std::map<Profile, double>& m) {
      for (Profile p : profiles)
        if (p != who && !(m.at(who) < m.at(p))) return false;
      return true;
    };
  };
  auto is_max = [&](Profile who) {
    return [who, &profiles](const std::map<Profile, double>& m) {
      for (Profile p : profiles)
        if (p != who && !(m.at(who) > m.at(p))) return false;
      return true;
    };
  };
  // "About zero" means the mean rounds to zero, as in an integer table.
  auto assign_split = [](const std::map<Profile, double>& m) {
    return m.at(Profile::follow_high) < 0.5 && m.at(Profile::follow_low) < 0.5 && m.at(Profile::lead_high) > 0.0 &&
           m.at(Profile::lead_low) > 0.0;
  };
  const double a = bootstrap(t_total, is_min(Profile::follow_high), rng);
  const double b = bootstrap(wrong, is_max(Profile::lead_low), rng);
  const double c = bootstrap(h2r, assign_split, rng);
  const double d = bootstrap(r2h, is_min(Profile::lead_high), rng);
  auto mean = [](const std::vector<double>& xs) { return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size(); };
  const std::string detail = fmt::format(
      "confidence a={:.3f} b={:.3f} c={:.3f} d={:.3f}; t_total FH/FL/LL/LH = {:.2f}/{:.2f}/{:.2f}/{:.2f}", a, b, c, d,
      mean(t_total[Profile::follow_high]), mean(t_total[Profile::follow_low]), mean(t_total[Profile::lead_low]),
      mean(t_total[Profile::lead_high]));
  return {a >= 0.95 && b >= 0.95 && c >= 0.95 && d >= 0.95, detail};
}

// Mean E[p_f] on the decision axis; a finished run keeps its last value.
std::vector<double> mean_follow_by_decision(const std::vector<SessionResult>& runs, int max_decision) {
  std::vector<double> sum(max_decision + 1, 0.0);
  for (const auto& r : runs) {
    const auto traj = belief_trajectory(r.records);
    std::size_t k = 0;
    double current = traj.front().e_pf;
    for (int d = 0; d <= max_decision; ++d) {
      while (k < traj.size() && traj[k].decision <= d) current = traj[k++].e_pf;
      sum[d] += current;
    }
  }
  for (double& s : sum) s /= static_cast<double>(runs.size());
  return sum;
}

Outcome belief_shapes() {
  std::vector<std::string> notes;
  bool pass = true;
  for (Profile p : {Profile::lead_high, Profile::lead_low, Profile::lead_drift}) {
    const auto mean = mean_follow_by_decision(sessions(p, 100), 10);
    int reached = -1;
    for (int d = 0; d <= 10 && reached < 0; ++d)
      if (mean[d] < 0.4) reached = d;
    pass = pass && std::abs(mean[0] - 0.8) < 1e-9 && reached >= 0;
    notes.push_back(fmt::format("{} <0.4 at decision {} (start {:.6f})", to_string(p), reached, mean[0]));
  }
  for (Profile p : {Profile::follow_high, Profile::follow_low}) {
    const auto runs = sessions(p, 100);
    int longest = 0;
    for (const auto& r : runs) longest = std::max(longest, belief_trajectory(r.records).back().decision);
    const auto mean = mean_follow_by_decision(runs, longest);
    const double lowest = *std::min_element(mean.begin(), mean.end());
    pass = pass && lowest >= 0.6;
    notes.push_back(fmt::format("{} min {:.3f}", to_string(p), lowest));
  }
  {
    // lead_drift on the belief-step axis, averaged over the runs still going
    // while at least half of them are.
    const int drift_step = preset(Profile::lead_drift).drift.front().step;
    const auto runs = sessions(Profile::lead_drift, 100);
    std::vector<std::vector<double>> pe;
    for (const auto& r : runs) {
      std::vector<double> s;
      for (const auto& pt : belief_trajectory(r.records)) s.push_back(pt.e_pe);
      pe.push_back(std::move(s));
    }
    double dip = 1.0, rise = 0.0;
    int rise_step = -1;
    for (int k = 0;; ++k) {
      int alive = 0;
      double sum = 0.0;
      for (const auto& s : pe)
        if (static_cast<int>(s.size()) > k) {
          ++alive;
          sum += s[k];
        }
      if (alive * 2 < static_cast<int>(pe.size())) break;
      const double m = sum / alive;
      if (k < drift_step) dip = std::min(dip, m);
      if (k > drift_step && m > rise) {
        rise = m;
        rise_step = k;
      }
    }
    // Below the prior's neighbourhood: at least 0.01 under E[p_e] = 0.1.
    const bool shape = dip < 0.09 && rise > 0.3;
    pass = pass && shape;
    notes.push_back(fmt::format("lead_drift E[p_e] dips to {:.3f} before step {}, peaks at {:.3f} (step {})", dip,
                                drift_step, rise, rise_step));
  }
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return {pass, detail};
}

Outcome determinism() {
  int compared = 0;
  for (Profile p : kAllProfiles) {
    RunConfig cfg = config_for(p);
    cfg.options.log_plans = true;
    for (std::uint64_t seed : {1, 17, 123456789}) {
      const auto a = run_session(cfg, seed).log_text();
      const auto b = run_session(cfg, seed).log_text();
      if (a != b) return {false, fmt::format("{} seed {} logs differ", to_string(p), seed)};
      ++compared;
    }
  }
  return {true, fmt::format("{} log pairs byte-identical", compared)};
}

Outcome protocol_fuzz() {
  const auto sc = testing::default_scenario();
  testing::Gen g(7);
  long steps = 0, illegal = 0, invariant = 0, sessions_run = 0, aborted = 0, records = 0;
  std::string first;
  while (steps < 10000) {
    HumanPolicy policy;
    policy.follow_bias = g.real(0.0, 1.0);
    policy.error_rate = g.real(0.0, 0.6);
    policy.assign_rate = g.real(0.0, 1.0);
    if (g.coin()) policy.drift = {{g.integer(0, 15), g.real(0.0, 0.6)}};
    const auto seed = static_cast<std::uint64_t>(g.integer(1, 1 << 30));
    SessionOptions options;
    options.log_plans = g.coin();
    Session session(sc, generate_variant(sc->pattern, static_cast<Difficulty>(g.integer(0, 2)), seed), options,
                    nlohmann::json::object());
    Rng rng = make_stream(seed, StreamId::human);
    HumanMemory memory;
    ++sessions_run;
    try {
      while (!session.complete() && steps < 10000) {
        const SessionState& st = session.state();
        const auto& h = st.agent(Agent::human);
        if (h.idle() && !h.waiting_until) {
          const HumanDecision d = human_policy_step(policy, st, rng, memory);
          ++steps;
          // Dry run on a copy: every part of the decision must be legal.
          SessionState probe = st;
          for (const auto& a : d.actions) {
            try {
              apply_action(probe, a);
            } catch (const ProtocolError& e) {
              ++illegal;
              if (first.empty()) first = fmt::format("{} ({})", to_string(a.kind), e.rule());
              break;
            }
          }
          session.submit_human(d.actions);
        } else {
          const auto next = session.next_event_time();
          if (!next || *next > st.params.time_cap_s) {
            ++aborted;
            break;
          }
          session.advance_until(*next);
        }
        // Structural invariants after every transition.
        const SessionState& now = session.state();
        frontier(now.graph(), now.completed);  // throws unless downward closed
        for (std::size_t i = 0; i < now.spots.size(); ++i) {
          if (now.completed[i] && now.spots[i] != now.graph().task(TaskId{static_cast<int>(i)}).color)
            throw InvariantViolation("completed spot holds the wrong color");
          if (now.misplaced[i] && (!now.spots[i] || now.completed[i]))
            throw InvariantViolation("misplaced flag without a wrong block");
        }
        int at_workspace = 0;
        for (Agent a : kAllAgents) {
          const auto& act = now.agent(a).activity;
          at_workspace += act && (act->phase == Phase::place || act->phase == Phase::remove);
        }
        if (at_workspace > 1) throw InvariantViolation("two agents in the shared workspace");
      }
    } catch (const ProtocolError& e) {
      ++illegal;
      if (first.empty()) first = e.what();
    } catch (const InvariantViolation& e) {
      ++invariant;
      if (first.empty()) first = e.what();
    } catch (const ConsistencyError& e) {
      ++invariant;
      if (first.empty()) first = e.what();
    }
    session.close(session.complete() ? "complete" : "aborted");
    for (const auto& r : session.records()) {
      if (r.at("type") != "action") continue;
      ++records;
      parse_action_kind(r.at("kind").get<std::string>());  // closed vocabulary
    }
  }
  const std::string detail =
      fmt::format("{} policy steps over {} sessions ({} hit the time cap), {} action records; illegal={} "
                  "invariant violations={}{}",
                  steps, sessions_run, aborted, records, illegal, invariant, first.empty() ? "" : " first: " + first);
  return {illegal == 0 && invariant == 0, detail};
}

}  // namespace

int main() {
  report(1, "belief contracts", belief_contracts);
  report(2, "solver oracle equivalence", solver_oracles);
  report(3, "schedule validity over 100 sessions", schedule_validity);
  report(4, "evaluation table orderings (bootstrap >= 95%)", table_orderings);
  report(5, "belief trajectory shapes", belief_shapes);
  report(6, "engine determinism", determinism);
  report(7, "protocol closure fuzz", protocol_fuzz);
  fmt::print("{} of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
