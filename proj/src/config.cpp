#include "hrc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace hrc {

using nlohmann::json;

namespace {

std::string join(const std::string& base, std::string_view key) {
  return base.empty() ? std::string(key) : fmt::format("{}.{}", base, key);
}

std::string index_path(const std::string& base, std::size_t i) { return fmt::format("{}[{}]", base, i); }

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path.empty() ? "config" : path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> keys) {
  const std::set<std::string_view> allowed(keys);
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw ValidationError(join(path, key), "unknown key");
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError(path, "expected an integer");
  return j.get<int>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path, "expected a string");
  return j.get<std::string>();
}

Color color(const json& j, const std::string& path) {
  try {
    return parse_color(text(j, path));
  } catch (const ValidationError& e) {
    throw ValidationError(path, e.what());
  }
}

// Reads `j[key]` into `out` when present.
template <typename F>
void optional_field(const json& j, const std::string& path, std::string_view key, F&& read) {
  const auto it = j.find(std::string(key));
  if (it != j.end()) read(*it, join(path, key));
}

void read_probability(const json& j, const std::string& path, double& out) {
  out = number(j, path);
  if (!(out >= 0.0 && out <= 1.0)) throw ValidationError(path, "must lie in [0, 1]");
}

void read_non_negative(const json& j, const std::string& path, double& out) {
  out = number(j, path);
  if (!(out >= 0.0)) throw ValidationError(path, "must be >= 0");
}

std::vector<Table> read_tables(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array of tables");
  std::vector<Table> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = index_path(path, i);
    require_object(j[i], p);
    reject_unknown(j[i], p, {"name", "distance_m", "colors"});
    Table t;
    t.name = fmt::format("table{}", i + 1);
    optional_field(j[i], p, "name", [&](const json& v, const std::string& q) { t.name = text(v, q); });
    if (!j[i].contains("distance_m")) throw ValidationError(join(p, "distance_m"), "missing");
    read_non_negative(j[i]["distance_m"], join(p, "distance_m"), t.distance_m);
    if (!j[i].contains("colors")) throw ValidationError(join(p, "colors"), "missing");
    const json& cs = j[i]["colors"];
    if (!cs.is_array()) throw ValidationError(join(p, "colors"), "expected an array");
    for (std::size_t k = 0; k < cs.size(); ++k) t.colors.push_back(color(cs[k], index_path(join(p, "colors"), k)));
    out.push_back(std::move(t));
  }
  return out;
}

AgentTiming read_timing(const json& j, const std::string& path, AgentTiming t) {
  require_object(j, path);
  reject_unknown(j, path, {"pick_s", "place_s", "speed_mps"});
  optional_field(j, path, "pick_s", [&](const json& v, const std::string& q) { read_non_negative(v, q, t.pick_s); });
  optional_field(j, path, "place_s", [&](const json& v, const std::string& q) { read_non_negative(v, q, t.place_s); });
  optional_field(j, path, "speed_mps", [&](const json& v, const std::string& q) {
    t.speed_mps = number(v, q);
    if (!(t.speed_mps > 0.0)) throw ValidationError(q, "must be > 0");
  });
  return t;
}

HumanPolicy read_policy(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"follow_bias", "error_rate", "assign_rate", "drift"});
  HumanPolicy p;
  optional_field(j, path, "follow_bias", [&](const json& v, const std::string& q) { read_probability(v, q, p.follow_bias); });
  optional_field(j, path, "error_rate", [&](const json& v, const std::string& q) { read_probability(v, q, p.error_rate); });
  optional_field(j, path, "assign_rate", [&](const json& v, const std::string& q) { read_probability(v, q, p.assign_rate); });
  optional_field(j, path, "drift", [&](const json& v, const std::string& q) {
    if (!v.is_array()) throw ValidationError(q, "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string e = index_path(q, i);
      require_object(v[i], e);
      reject_unknown(v[i], e, {"step", "error_rate"});
      if (!v[i].contains("step") || !v[i].contains("error_rate")) throw ValidationError(e, "needs step and error_rate");
      DriftPoint d;
      d.step = integer(v[i]["step"], join(e, "step"));
      read_probability(v[i]["error_rate"], join(e, "error_rate"), d.error_rate);
      p.drift.push_back(d);
    }
  });
  p.validate();
  return p;
}

}  // namespace

void apply_profile(ExperimentConfig& config, std::string_view name) {
  const Profile p = parse_profile(name);
  config.profile = std::string(to_string(p));
  config.policy = preset(p);
}

void ExperimentConfig::validate() const {
  scenario.validate();
  policy.validate();
  engine.validate();
  try {
    planner.costs.validate();
  } catch (const ContractViolation& e) {
    throw ValidationError("planner", e.what());
  }
  try {
    planner.estimator.validate();
  } catch (const ContractViolation& e) {
    throw ValidationError("estimator", e.what());
  }
}

ExperimentConfig parse_experiment_config(const json& j) {
  require_object(j, "");
  reject_unknown(j, "", {"schema_version", "workspaces", "spots", "pattern", "tables", "durations",
                         "difficulty_ratios", "difficulty", "profile", "planner", "estimator", "engine"});
  ExperimentConfig c;
  ScenarioConfig& s = c.scenario;
  optional_field(j, "", "schema_version", [&](const json& v, const std::string& q) { s.schema_version = integer(v, q); });
  if (s.schema_version != 1)
    throw ValidationError("schema_version", fmt::format("unsupported version {}", s.schema_version));
  const bool resized = j.contains("workspaces") || j.contains("spots");
  optional_field(j, "", "workspaces", [&](const json& v, const std::string& q) { s.workspaces = integer(v, q); });
  optional_field(j, "", "spots", [&](const json& v, const std::string& q) { s.spots = integer(v, q); });
  if (j.contains("pattern")) {
    const json& rows = j["pattern"];
    if (!rows.is_array()) throw ValidationError("pattern", "expected an array of workspaces");
    std::vector<Color> colors;
    for (std::size_t w = 0; w < rows.size(); ++w) {
      const std::string p = index_path("pattern", w);
      if (!rows[w].is_array()) throw ValidationError(p, "expected an array of colors");
      if (static_cast<int>(rows[w].size()) != s.spots)
        throw ValidationError(p, fmt::format("expected {} spots", s.spots));
      for (std::size_t k = 0; k < rows[w].size(); ++k) colors.push_back(color(rows[w][k], index_path(p, k)));
    }
    if (static_cast<int>(rows.size()) != s.workspaces)
      throw ValidationError("pattern", fmt::format("expected {} workspaces", s.workspaces));
    s.pattern = Pattern(s.workspaces, s.spots, std::move(colors));
  } else if (resized && (s.workspaces != 4 || s.spots != 5)) {
    throw ValidationError("pattern", "required when the board is not 4x5");
  }
  optional_field(j, "", "tables", [&](const json& v, const std::string& q) {
    require_object(v, q);
    reject_unknown(v, q, {"human", "robot"});
    for (Agent a : kAllAgents)
      optional_field(v, q, to_string(a), [&](const json& t, const std::string& r) {
        s.tables[index_of(a)].tables = read_tables(t, r);
      });
  });
  optional_field(j, "", "durations", [&](const json& v, const std::string& q) {
    require_object(v, q);
    reject_unknown(v, q, {"human", "robot"});
    for (Agent a : kAllAgents)
      optional_field(v, q, to_string(a), [&](const json& t, const std::string& r) {
        s.durations.agents[index_of(a)] = read_timing(t, r, s.durations.agents[index_of(a)]);
      });
  });
  optional_field(j, "", "difficulty_ratios", [&](const json& v, const std::string& q) {
    require_object(v, q);
    reject_unknown(v, q, {"easy", "medium", "difficult"});
    optional_field(v, q, "easy", [&](const json& x, const std::string& r) { read_probability(x, r, s.ambiguity.easy); });
    optional_field(v, q, "medium", [&](const json& x, const std::string& r) { read_probability(x, r, s.ambiguity.medium); });
    optional_field(v, q, "difficult", [&](const json& x, const std::string& r) { read_probability(x, r, s.ambiguity.difficult); });
  });
  optional_field(j, "", "difficulty", [&](const json& v, const std::string& q) {
    try {
      c.difficulty = parse_difficulty(text(v, q));
    } catch (const ValidationError& e) {
      throw ValidationError(q, e.what());
    }
  });
  optional_field(j, "", "profile", [&](const json& v, const std::string& q) {
    if (v.is_string()) {
      try {
        apply_profile(c, v.get<std::string>());
      } catch (const ValidationError& e) {
        throw ValidationError(q, e.what());
      }
    } else {
      c.profile = "custom";
      c.policy = read_policy(v, q);
    }
  });
  optional_field(j, "", "planner", [&](const json& v, const std::string& q) {
    require_object(v, q);
    reject_unknown(v, q, {"lead_penalty", "error_penalty", "conflict_penalty", "reject_inflation", "reject_error"});
    CostModel& m = c.planner.costs;
    optional_field(v, q, "lead_penalty", [&](const json& x, const std::string& r) { read_non_negative(x, r, m.lead_penalty); });
    optional_field(v, q, "error_penalty", [&](const json& x, const std::string& r) { read_non_negative(x, r, m.error_penalty); });
    optional_field(v, q, "conflict_penalty", [&](const json& x, const std::string& r) { read_non_negative(x, r, m.conflict_penalty); });
    optional_field(v, q, "reject_inflation", [&](const json& x, const std::string& r) {
      m.reject_inflation = number(x, r);
      if (!(m.reject_inflation >= 1.0)) throw ValidationError(r, "must be >= 1");
    });
    optional_field(v, q, "reject_error", [&](const json& x, const std::string& r) { read_probability(x, r, m.reject_error); });
  });
  optional_field(j, "", "estimator", [&](const json& v, const std::string& q) {
    require_object(v, q);
    reject_unknown(v, q, {"likelihood_floor", "stay_probability"});
    EstimatorParams& e = c.planner.estimator;
    optional_field(v, q, "likelihood_floor", [&](const json& x, const std::string& r) {
      e.likelihood_floor = number(x, r);
      if (!(e.likelihood_floor > 0.0 && e.likelihood_floor <= 0.1)) throw ValidationError(r, "must lie in (0, 0.1]");
    });
    optional_field(v, q, "stay_probability", [&](const json& x, const std::string& r) {
      e.stay_probability = number(x, r);
      if (!(e.stay_probability > 0.5 && e.stay_probability <= 1.0)) throw ValidationError(r, "must lie in (0.5, 1]");
    });
  });
  optional_field(j, "", "engine", [&](const json& v, const std::string& q) {
    require_object(v, q);
    reject_unknown(v, q, {"think_time_s", "return_handoff_s", "human_wait_s", "max_consecutive_waits", "time_cap_s"});
    EngineParams& e = c.engine;
    optional_field(v, q, "think_time_s", [&](const json& x, const std::string& r) { e.think_time_s = number(x, r); });
    optional_field(v, q, "return_handoff_s", [&](const json& x, const std::string& r) { e.return_handoff_s = number(x, r); });
    optional_field(v, q, "human_wait_s", [&](const json& x, const std::string& r) { e.human_wait_s = number(x, r); });
    optional_field(v, q, "max_consecutive_waits", [&](const json& x, const std::string& r) { e.max_consecutive_waits = integer(x, r); });
    optional_field(v, q, "time_cap_s", [&](const json& x, const std::string& r) { e.time_cap_s = number(x, r); });
  });
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  const json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw ValidationError("config", fmt::format("{} is not valid JSON", path.string()));
  return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& c) {
  const ScenarioConfig& s = c.scenario;
  json pattern = json::array();
  if (s.pattern)
    for (int w = 0; w < s.workspaces; ++w) {
      json row = json::array();
      for (int k = 0; k < s.spots; ++k) row.push_back(to_string(s.pattern->at(w, k)));
      pattern.push_back(std::move(row));
    }
  json tables = json::object(), durations = json::object();
  for (Agent a : kAllAgents) {
    json list = json::array();
    for (const auto& t : s.tables[index_of(a)].tables) {
      json colors = json::array();
      for (Color col : t.colors) colors.push_back(to_string(col));
      list.push_back(json{{"name", t.name}, {"distance_m", t.distance_m}, {"colors", colors}});
    }
    tables[std::string(to_string(a))] = std::move(list);
    const auto& tm = s.durations.of(a);
    durations[std::string(to_string(a))] = json{{"pick_s", tm.pick_s}, {"place_s", tm.place_s}, {"speed_mps", tm.speed_mps}};
  }
  json profile;
  if (c.profile == "custom") {
    json drift = json::array();
    for (const auto& d : c.policy.drift) drift.push_back(json{{"step", d.step}, {"error_rate", d.error_rate}});
    profile = json{{"follow_bias", c.policy.follow_bias},
                   {"error_rate", c.policy.error_rate},
                   {"assign_rate", c.policy.assign_rate},
                   {"drift", drift}};
  } else {
    profile = c.profile;
  }
  const CostModel& m = c.planner.costs;
  return json{
      {"schema_version", s.schema_version},
      {"workspaces", s.workspaces},
      {"spots", s.spots},
      {"pattern", pattern},
      {"tables", tables},
      {"durations", durations},
      {"difficulty_ratios", {{"easy", s.ambiguity.easy}, {"medium", s.ambiguity.medium}, {"difficult", s.ambiguity.difficult}}},
      {"difficulty", to_string(c.difficulty)},
      {"profile", profile},
      {"planner", {{"lead_penalty", m.lead_penalty}, {"error_penalty", m.error_penalty},
                   {"conflict_penalty", m.conflict_penalty}, {"reject_inflation", m.reject_inflation},
                   {"reject_error", m.reject_error}}},
      {"estimator", {{"likelihood_floor", c.planner.estimator.likelihood_floor},
                     {"stay_probability", c.planner.estimator.stay_probability}}},
      {"engine", {{"think_time_s", c.engine.think_time_s}, {"return_handoff_s", c.engine.return_handoff_s},
                  {"human_wait_s", c.engine.human_wait_s}, {"max_consecutive_waits", c.engine.max_consecutive_waits},
                  {"time_cap_s", c.engine.time_cap_s}}},
  };
}

RunConfig make_run_config(const ExperimentConfig& c, bool log_plans) {
  c.validate();
  RunConfig r;
  r.scenario = std::make_shared<const Scenario>(build_scenario(c.scenario));
  r.policy = c.policy;
  r.profile = c.profile;
  r.difficulty = c.difficulty;
  r.options.planner = c.planner;
  r.options.engine = c.engine;
  r.options.log_plans = log_plans;
  return r;
}

}  // namespace hrc
