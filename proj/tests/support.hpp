// Shared test fixtures, random instance generators and brute-force oracles.
// The oracles are deliberately naive and share no code with the library's
// solvers.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hrc/engine.hpp"
#include "hrc/planner.hpp"
#include "hrc/random.hpp"
#include "hrc/world.hpp"

namespace testing {

inline std::shared_ptr<const hrc::Scenario> default_scenario() {
  static const auto sc =
      std::make_shared<const hrc::Scenario>(hrc::build_scenario(hrc::ScenarioConfig::defaults()));
  return sc;
}

// Hand-rolled generator: thin wrapper over the library RNG helpers.
struct Gen {
  hrc::Rng rng;
  explicit Gen(std::uint64_t seed) : rng(hrc::make_stream(seed, 0x7e57)) {}
  int integer(int lo, int hi) { return lo + static_cast<int>(hrc::uniform_index(rng, hi - lo + 1)); }
  double real(double lo, double hi) { return lo + (hi - lo) * hrc::uniform01(rng); }
  // Multiples of 0.5 keep sums exact, so ties actually happen.
  double half_steps(int lo, int hi) { return 0.5 * integer(2 * lo, 2 * hi); }
  bool coin(double p = 0.5) { return hrc::bernoulli(rng, p); }
};

template <std::size_t N>
std::array<double, N> random_pmf(Gen& g) {
  std::array<double, N> p{};
  double total = 0.0;
  for (auto& x : p) {
    x = g.coin(0.2) ? 0.0 : g.real(0.0, 1.0);
    total += x;
  }
  if (total == 0.0) {
    p[g.integer(0, N - 1)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

// ---------------------------------------------------------------------------
// Belief oracle: explicit transition matrix, then Bayes.

inline std::vector<double> oracle_forward(const std::vector<double>& prior, const std::vector<double>& support,
                                          double stay, double floor, bool rising_likelihood) {
  const std::size_t n = prior.size();
  std::vector<std::vector<double>> T(n, std::vector<double>(n, 0.0));  // T[to][from]
  for (std::size_t from = 0; from < n; ++from) {
    T[from][from] += stay;
    const double side = (1.0 - stay) / 2.0;
    if (from == 0) T[from][from] += side; else T[from - 1][from] += side;
    if (from == n - 1) T[from][from] += side; else T[from + 1][from] += side;
  }
  std::vector<double> post(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < n; ++j) pred += T[i][j] * prior[j];
    const double like = std::max(rising_likelihood ? support[i] : 1.0 - support[i], floor);
    post[i] = like * pred;
    z += post[i];
  }
  for (auto& x : post) x /= z;
  return post;
}

// ---------------------------------------------------------------------------
// Allocation oracle: enumerate all 2^n agent vectors.

struct BruteAllocation {
  double objective = std::numeric_limits<double>::infinity();
  double total = std::numeric_limits<double>::infinity();
  std::vector<hrc::Agent> agents;
};

inline BruteAllocation brute_force_allocation(const hrc::CostTable& table) {
  const std::size_t n = table.rows.size();
  BruteAllocation best;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    // Bit (n-1-i) set means task i goes to the robot, so increasing masks
    // visit agent vectors in lexicographic order with human first.
    std::array<double, 2> load = table.base_load;
    double total = 0.0;
    bool feasible = true;
    std::vector<hrc::Agent> agents(n);
    for (std::size_t i = 0; i < n && feasible; ++i) {
      const auto& row = table.rows[i];
      const bool robot = (mask >> (n - 1 - i)) & 1u;
      agents[i] = robot ? hrc::Agent::robot : hrc::Agent::human;
      if (row.forced && *row.forced != agents[i]) { feasible = false; break; }
      double cost;
      if (robot) {
        if (!row.robot) { feasible = false; break; }
        cost = *row.robot;
      } else {
        std::optional<double> h;
        if (row.human_explicit) h = *row.human_explicit;
        if (row.human_free && (!h || *row.human_free < *h)) h = *row.human_free;
        if (!h) { feasible = false; break; }
        cost = *h;
      }
      load[robot ? 1 : 0] += cost;
      total += cost;
    }
    if (!feasible) continue;
    const double obj = std::max(load[0], load[1]);
    if (obj < best.objective || (obj == best.objective && total < best.total)) {
      best = {obj, total, agents};
    }
  }
  return best;
}

inline hrc::CostTable random_cost_table(Gen& g, int n) {
  hrc::CostTable t;
  t.base_load = {g.coin(0.3) ? g.half_steps(0, 40) : 0.0, g.coin(0.3) ? g.half_steps(0, 40) : 0.0};
  for (int i = 0; i < n; ++i) {
    hrc::CostRow row{hrc::TaskId{i}, {}, {}, {}, {}};
    const int reach = g.integer(0, 5);  // mostly both agents
    if (reach != 0) {
      row.human_explicit = g.half_steps(5, 60);
      row.human_free = g.half_steps(5, 60);
    }
    if (reach != 1) row.robot = g.half_steps(10, 80);
    if (row.robot && g.coin(0.1)) row.forced = hrc::Agent::robot;
    t.rows.push_back(row);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Schedule oracle: every pair of per-agent orders, each scheduled as early
// as possible.

inline double brute_force_makespan(const hrc::SchedulingProblem& p) {
  const std::size_t n = p.jobs.size();
  std::array<std::vector<int>, 2> lists;
  for (std::size_t i = 0; i < n; ++i) lists[hrc::index_of(p.jobs[i].agent)].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> preds(n);
  for (const auto& [a, b] : p.precedence) {
    int ia = -1, ib = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (p.jobs[i].task == a) ia = static_cast<int>(i);
      if (p.jobs[i].task == b) ib = static_cast<int>(i);
    }
    if (ia >= 0 && ib >= 0) preds[ib].push_back(ia);
  }
  double best = std::numeric_limits<double>::infinity();
  std::sort(lists[0].begin(), lists[0].end());
  do {
    std::sort(lists[1].begin(), lists[1].end());
    do {
      std::vector<double> finish(n, -1.0);
      std::array<std::size_t, 2> next{0, 0};
      std::array<double, 2> free = p.ready;
      bool progress = true;
      while (progress) {
        progress = false;
        for (int a = 0; a < 2; ++a) {
          if (next[a] >= lists[a].size()) continue;
          const int j = lists[a][next[a]];
          double start = free[a];
          bool ready = true;
          for (int q : preds[j]) {
            if (finish[q] < 0) { ready = false; break; }
            start = std::max(start, finish[q]);
          }
          if (!ready) continue;
          finish[j] = start + p.jobs[j].duration;
          free[a] = finish[j];
          ++next[a];
          progress = true;
        }
      }
      if (next[0] == lists[0].size() && next[1] == lists[1].size()) {
        double m = 0.0;
        for (double f : finish) m = std::max(m, f);
        best = std::min(best, m);
      }
    } while (std::next_permutation(lists[1].begin(), lists[1].end()));
  } while (std::next_permutation(lists[0].begin(), lists[0].end()));
  if (n == 0) return 0.0;
  return best;
}

inline hrc::SchedulingProblem random_scheduling_problem(Gen& g, int n) {
  hrc::SchedulingProblem p;
  for (int i = 0; i < n; ++i)
    p.jobs.push_back(hrc::Job{hrc::TaskId{i}, g.coin() ? hrc::Agent::human : hrc::Agent::robot,
                              g.half_steps(1, 40)});
  // Edges only from lower to higher ids keep the relation acyclic.
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (g.coin(0.3)) p.precedence.emplace_back(hrc::TaskId{a}, hrc::TaskId{b});
  if (g.coin(0.3)) p.ready = {g.half_steps(0, 20), g.half_steps(0, 20)};
  return p;
}

// ---------------------------------------------------------------------------
// Schedule validity: f = s + d exactly, no same-agent overlap, precedence.

inline std::string schedule_violation(const hrc::Schedule& s, const hrc::SchedulingProblem& p) {
  if (s.rows.size() != p.jobs.size()) return "row count differs from job count";
  for (const auto& job : p.jobs) {
    const auto* row = s.find(job.task);
    if (!row) return "job missing from schedule";
    if (row->agent != job.agent) return "job moved to another agent";
    if (row->finish != row->start + job.duration) return "finish != start + duration";
    if (row->start < p.ready[hrc::index_of(job.agent)]) return "job starts before its agent is free";
  }
  for (const auto& a : s.rows)
    for (const auto& b : s.rows)
      if (a.task < b.task && a.agent == b.agent && a.start < b.finish && b.start < a.finish)
        return "same-agent overlap";
  for (const auto& [before, after] : p.precedence) {
    const auto* x = s.find(before);
    const auto* y = s.find(after);
    if (x && y && x->finish > y->start) return "precedence violated";
  }
  return {};
}

// Rebuilds the scheduling problem behind a plan from the scenario.
inline hrc::SchedulingProblem problem_of(const hrc::Plan& plan, const hrc::Scenario& sc,
                                         std::array<double, 2> ready) {
  hrc::SchedulingProblem p;
  p.ready = ready;
  if (!plan.allocation) return p;
  for (const auto& e : plan.allocation->entries) {
    const auto& spec = sc.graph.task(e.task);
    p.jobs.push_back(hrc::Job{e.task, e.agent, hrc::derive_duration(sc.durations, sc.layout, e.agent, spec)});
  }
  for (const auto& a : plan.allocation->entries)
    for (const auto& b : plan.allocation->entries)
      if (sc.graph.precedes(a.task, b.task)) p.precedence.emplace_back(a.task, b.task);
  return p;
}

}  // namespace testing
