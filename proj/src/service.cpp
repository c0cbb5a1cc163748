#include "hrc/service.hpp"

#include <chrono>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "httplib.h"

namespace hrc {

using nlohmann::json;

std::string_view to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::memorize: return "memorize";
    case SessionPhase::collaborate: return "collaborate";
    case SessionPhase::finished: return "finished";
  }
  return "?";
}

json ServiceError::to_json() const {
  json j{{"error", code_}, {"message", what()}};
  if (!field_.empty()) j["field"] = field_;
  return j;
}

json to_json(const ClientEvent& e, const std::string& session_id) {
  return json{{"session_id", session_id}, {"seq", e.seq}, {"type", e.type}, {"payload", e.payload}};
}

WallClock steady_wall_clock() {
  const auto origin = std::chrono::steady_clock::now();
  return [origin] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin).count();
  };
}

struct SessionManager::Entry {
  std::mutex mu;
  std::condition_variable cv;
  std::string id;
  SessionPhase phase = SessionPhase::memorize;
  double created_at = 0.0;
  double deadline = 0.0;
  std::optional<double> origin;  // wall time of simulated t = 0 (first human action)
  std::uint64_t seed = 0;
  ExperimentConfig config;
  std::shared_ptr<const Scenario> scenario;
  std::unique_ptr<Session> session;
  std::vector<ClientEvent> events;
  std::size_t published = 0;  // session records already turned into events
};

SessionManager::SessionManager(ServiceConfig config, WallClock clock)
    : config_(std::move(config)), clock_(std::move(clock)) {
  config_.base.validate();
  if (!(config_.time_scale > 0.0)) throw ValidationError("time_scale", "must be > 0");
  if (!(config_.memorize_s >= 0.0)) throw ValidationError("memorize_s", "must be >= 0");
  if (config_.max_lag < 1) throw ValidationError("max_lag", "must be >= 1");
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", fmt::format("no session '{}'", id));
  return it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

void SessionManager::emit(Entry& e, std::string type, json payload) {
  e.events.push_back(ClientEvent{e.events.size(), std::move(type), std::move(payload)});
  e.cv.notify_all();
}

json SessionManager::snapshot(const Entry& e) const {
  const SessionState& s = e.session->state();
  json board = json::array();
  for (const TaskSpec& t : s.graph().tasks()) {
    const auto placed = s.spots[t.id.value];
    std::string fill = "empty";
    if (placed) fill = s.completed[t.id.value] ? "correct" : "wrong";
    // Only what was actually placed is shown, never the expected color.
    board.push_back(json{{"task", task_label(t)},
                         {"workspace", t.workspace + 1},
                         {"spot", t.spot + 1},
                         {"fill", fill},
                         {"color", placed ? json(to_string(*placed)) : json(nullptr)}});
  }
  json agents = json::object();
  for (Agent a : kAllAgents) {
    const AgentState& st = s.agent(a);
    json j{{"status", "idle"}};
    if (st.activity) {
      j["status"] = to_string(st.activity->phase);
      j["task"] = task_label(s.graph().task(st.activity->task));
      j["activity"] = st.activity->kind == Activity::Kind::fetch ? "fetch" : "removal";
      if (a == Agent::human) j["color"] = to_string(st.activity->color);
    }
    if (st.waiting_until) j["waiting_until"] = *st.waiting_until;
    agents[std::string(to_string(a))] = std::move(j);
  }
  json to_robot = json::array();
  for (const auto& as : s.to_robot)
    to_robot.push_back(json{{"task", task_label(s.graph().task(as.task))},
                            {"color", as.color ? json(to_string(*as.color)) : json(nullptr)},
                            {"accepted", as.accepted}});
  json available = json::array();
  for (TaskId t : s.available_tasks()) available.push_back(task_label(s.graph().task(t)));
  return json{{"phase", to_string(e.phase)},
              {"t", s.clock},
              {"board", std::move(board)},
              {"agents", std::move(agents)},
              {"to_human", s.to_human ? json(task_label(s.graph().task(s.to_human->task))) : json(nullptr)},
              {"to_robot", std::move(to_robot)},
              {"available", std::move(available)},
              {"workspace_holder", s.workspace_holder ? json(to_string(*s.workspace_holder)) : json(nullptr)},
              {"completed", s.correct_placements()},
              {"total", s.graph().size()},
              {"e_pf", s.beliefs.expected_follow()},
              {"e_pe", s.beliefs.expected_error()}};
}

void SessionManager::publish_new_records(Entry& e) {
  const auto& records = e.session->records();
  if (e.published == records.size()) return;
  const json* end = nullptr;
  for (; e.published < records.size(); ++e.published) {
    const json& r = records[e.published];
    const std::string type = r.value("type", "");
    if (type == "belief") {
      emit(e, "belief_update",
           json{{"t", r["t"]}, {"step", r["step"]}, {"decision", r["decision"]}, {"e_pf", r["e_pf"]},
                {"e_pe", r["e_pe"]}, {"pf", r["pf"]}, {"pe", r["pe"]}, {"obs", r["obs"]}});
    } else if (type == "end") {
      end = &r;
    } else if (type == "action" && r.value("agent", "") == "robot") {
      const ActionKind kind = parse_action_kind(r["kind"].get<std::string>());
      const std::string outcome = r.value("outcome", "");
      json base{{"t", r["t"]}, {"task", r["task"]}};
      switch (kind) {
        case ActionKind::robot_assign_to_human:
          base["status"] = "pending";
          emit(e, "assignment_offer", std::move(base));
          break;
        case ActionKind::robot_cancel_assignment:
          base["status"] = "withdrawn";
          emit(e, "assignment_offer", std::move(base));
          break;
        case ActionKind::robot_reject_assignment: {
          base["verdict"] = "reject";
          const std::string prefix = "rejected: ";
          base["reason"] = outcome.rfind(prefix, 0) == 0 ? outcome.substr(prefix.size()) : std::string();
          emit(e, "assignment_verdict", std::move(base));
          break;
        }
        case ActionKind::robot_perform_assigned:
          if (outcome == "accepted") {
            base["verdict"] = "accept";
            emit(e, "assignment_verdict", std::move(base));
            break;
          }
          [[fallthrough]];
        default:
          base["kind"] = r["kind"];
          base["outcome"] = outcome;
          // The robot always fetches the right color, so its color stays
          // hidden until the block sits correctly in its spot.
          if (kind == ActionKind::place) base["color"] = r["color"];
          emit(e, "robot_action", std::move(base));
          break;
      }
    }
  }
  emit(e, "state_snapshot", snapshot(e));
  // Completion is always the last event a subscriber sees.
  if (end) emit(e, "session_complete", json{{"t", (*end)["t"]}, {"status", (*end)["status"]}, {"metrics", (*end)["metrics"]}});
}

void SessionManager::finish_locked(Entry& e, std::string_view status) {
  if (e.phase == SessionPhase::finished) return;
  e.session->close(status);
  e.phase = SessionPhase::finished;
  publish_new_records(e);
  if (config_.log_dir) {
    std::filesystem::create_directories(*config_.log_dir);
    std::ofstream out(*config_.log_dir / (e.id + ".jsonl"));
    out << e.session->log_text();
  }
}

void SessionManager::sync(Entry& e) {
  const double now = clock_();
  if (e.phase == SessionPhase::memorize && now >= e.deadline) {
    e.phase = SessionPhase::collaborate;
    emit(e, "state_snapshot", snapshot(e));
  }
  if (e.phase != SessionPhase::collaborate || !e.origin) return;
  const double sim_now = (now - *e.origin) * config_.time_scale;
  if (sim_now > e.session->state().clock) e.session->advance_until(sim_now);
  publish_new_records(e);
  if (e.session->complete()) {
    finish_locked(e, "complete");
  } else if (e.session->state().clock > e.session->state().params.time_cap_s) {
    finish_locked(e, "aborted");
  }
}

json SessionManager::create(const json& request) {
  if (!request.is_object()) throw ValidationError("request", "expected an object");
  for (const auto& [key, _] : request.items())
    if (key != "difficulty" && key != "seed" && key != "config") throw ValidationError(key, "unknown key");
  json merged = to_json(config_.base);
  if (request.contains("config")) {
    if (!request["config"].is_object()) throw ValidationError("config", "expected an object");
    merged.merge_patch(request["config"]);
  }
  if (request.contains("difficulty")) merged["difficulty"] = request["difficulty"];
  ExperimentConfig cfg = parse_experiment_config(merged);

  std::uint64_t seed = 0;
  if (request.contains("seed")) {
    const json& s = request["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      throw ValidationError("seed", "expected a non-negative integer");
    seed = s.get<std::uint64_t>();
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }

  auto e = std::make_shared<Entry>();
  e->config = cfg;
  e->seed = seed;
  e->scenario = std::make_shared<const Scenario>(build_scenario(cfg.scenario));
  PatternVariant variant = generate_variant(e->scenario->pattern, cfg.difficulty, seed, e->scenario->ambiguity);
  const json variant_json = variant_to_json(variant);
  SessionOptions options;
  options.planner = cfg.planner;
  options.engine = cfg.engine;
  e->created_at = clock_();
  e->deadline = e->created_at + config_.memorize_s;
  {
    std::lock_guard lock(mutex_);
    std::random_device rd;
    e->id = fmt::format("s{}-{:08x}", ++counter_, rd());
    e->session = std::make_unique<Session>(
        e->scenario, std::move(variant), options,
        json{{"seed", seed}, {"profile", "interactive"}, {"difficulty", to_string(cfg.difficulty)},
             {"session_id", e->id}});
    sessions_[e->id] = e;
  }
  std::lock_guard lock(e->mu);
  e->published = e->session->records().size();
  emit(*e, "state_snapshot", snapshot(*e));
  return json{{"session_id", e->id},
              {"phase", to_string(e->phase)},
              {"created_at", e->created_at},
              {"memorize_deadline_s", config_.memorize_s},
              {"seed", seed},
              {"variant", variant_json}};
}

json SessionManager::pattern(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  if (e->phase != SessionPhase::memorize)
    throw ServiceError(409, "phase", "the pattern is only shown while memorizing");
  const Pattern& p = e->scenario->pattern;
  json rows = json::array();
  for (int w = 0; w < p.workspaces(); ++w) {
    json row = json::array();
    for (int k = 0; k < p.spots(); ++k) row.push_back(to_string(p.at(w, k)));
    rows.push_back(std::move(row));
  }
  return json{{"session_id", id}, {"pattern", rows}, {"seconds_left", e->deadline - clock_()}};
}

json SessionManager::start(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  if (e->phase == SessionPhase::finished) throw ServiceError(409, "phase", "the session is finished");
  if (e->phase == SessionPhase::memorize) {
    e->phase = SessionPhase::collaborate;
    emit(*e, "state_snapshot", snapshot(*e));
  }
  return json{{"session_id", id}, {"phase", to_string(e->phase)}};
}

json SessionManager::state(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  json s = snapshot(*e);
  s["session_id"] = id;
  s["seq"] = e->events.empty() ? 0 : e->events.back().seq;
  return s;
}

json SessionManager::submit(const std::string& id, const json& action) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  if (e->phase != SessionPhase::collaborate)
    throw ServiceError(409, "phase", fmt::format("actions are not accepted while {}", to_string(e->phase)));
  if (!action.is_object()) throw ValidationError("action", "expected an object");
  for (const auto& [key, _] : action.items())
    if (key != "kind" && key != "task" && key != "color") throw ValidationError(key, "unknown key");
  if (!action.contains("kind") || !action["kind"].is_string()) throw ValidationError("kind", "missing");

  ActionRequest req;
  req.agent = Agent::human;
  try {
    req.kind = parse_action_kind(action["kind"].get<std::string>());
  } catch (const ValidationError& err) {
    throw ValidationError("kind", err.what());
  }
  if (action.contains("task") && !action["task"].is_null()) {
    if (!action["task"].is_string()) throw ValidationError("task", "expected a label such as W1S1");
    const auto t = e->scenario->graph.find(action["task"].get<std::string>());
    if (!t) throw ServiceError(422, "unknown_task", fmt::format("no task '{}'", action["task"].get<std::string>()), "task");
    req.task = *t;
  }
  if (action.contains("color") && !action["color"].is_null()) {
    if (!action["color"].is_string()) throw ValidationError("color", "expected a color name");
    try {
      req.color = parse_color(action["color"].get<std::string>());
    } catch (const ValidationError& err) {
      throw ValidationError("color", err.what());
    }
  }
  // Simulated time starts with the first human action.
  const bool first = !e->origin;
  if (first) e->origin = clock_();
  try {
    e->session->submit_human(req);
  } catch (const ProtocolError& err) {
    if (first) e->origin.reset();
    throw ServiceError(409, err.rule(), err.what());
  }
  publish_new_records(*e);
  if (e->session->complete()) finish_locked(*e, "complete");
  return json{{"ok", true}, {"t", e->session->state().clock}, {"seq", e->events.back().seq}};
}

json SessionManager::finish(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  if (e->phase != SessionPhase::finished)
    finish_locked(*e, e->session->complete() ? "complete" : "aborted");
  const json& end = e->session->records().back();
  return json{{"session_id", id}, {"phase", to_string(e->phase)}, {"status", end["status"]}, {"metrics", end["metrics"]}};
}

std::string SessionManager::log(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  if (e->phase != SessionPhase::finished)
    throw ServiceError(409, "phase", "the log is available once the session is finished");
  return e->session->log_text();
}

json SessionManager::metrics(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  sync(*e);
  return json{{"session_id", id},
              {"phase", to_string(e->phase)},
              {"metrics", metrics_to_json(compute_metrics(e->session->records()))}};
}

std::vector<ClientEvent> SessionManager::events(const std::string& id, std::uint64_t from, double wait_s,
                                                std::size_t limit) {
  auto e = find(id);
  std::unique_lock lock(e->mu);
  sync(*e);
  if (from >= e->events.size() && wait_s > 0.0 && e->phase != SessionPhase::finished) {
    e->cv.wait_for(lock, std::chrono::duration<double>(wait_s),
                   [&] { return from < e->events.size(); });
  }
  std::vector<ClientEvent> out;
  if (from >= e->events.size()) return out;
  if (e->events.size() - from > config_.max_lag) {
    // Too far behind: skip to the newest snapshot.
    std::size_t latest = e->events.size() - 1;
    while (latest > 0 && e->events[latest].type != "state_snapshot") --latest;
    out.push_back(ClientEvent{e->events[latest].seq, "resync",
                              json{{"skipped_from", from}, {"resume_at", e->events[latest].seq}}});
    from = latest;
  }
  for (std::size_t i = from; i < e->events.size() && out.size() < limit; ++i) out.push_back(e->events[i]);
  return out;
}

void SessionManager::tick() {
  for (const auto& id : ids()) {
    try {
      auto e = find(id);
      std::lock_guard lock(e->mu);
      sync(*e);
    } catch (const ServiceError&) {
    }
  }
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.status(), e.to_json());
    } catch (const ValidationError& e) {
      send_json(res, 400, json{{"error", "validation"}, {"field", e.field()}, {"message", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, json{{"error", "bad_json"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, json{{"error", "internal"}, {"message", e.what()}});
    }
  };
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& m) {
  server.Post("/sessions", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 201, m.create(body_of(req)));
              }));
  server.Get(R"(/sessions/([^/]+)/pattern)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, m.pattern(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/start)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, m.start(req.matches[1]));
              }));
  server.Get(R"(/sessions/([^/]+)/state)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, m.state(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/actions)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, m.submit(req.matches[1], body_of(req)));
              }));
  server.Post(R"(/sessions/([^/]+)/finish)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, m.finish(req.matches[1]));
              }));
  server.Get(R"(/sessions/([^/]+)/log)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(m.log(req.matches[1]), "application/x-ndjson");
             }));
  server.Get(R"(/sessions/([^/]+)/metrics)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, m.metrics(req.matches[1]));
             }));
  server.Get(R"(/sessions/([^/]+)/events)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               std::uint64_t from = 0;
               if (req.has_param("from")) {
                 const std::string v = req.get_param_value("from");
                 try {
                   from = std::stoull(v);
                 } catch (const std::exception&) {
                   throw ValidationError("from", "expected a non-negative integer");
                 }
               }
               m.events(id, from);  // fails early on an unknown session
               if (req.get_param_value("format") == "json") {
                 json out = json::array();
                 for (const auto& e : m.events(id, from)) out.push_back(to_json(e, id));
                 send_json(res, 200, out);
                 return;
               }
               auto cursor = std::make_shared<std::uint64_t>(from);
               res.set_chunked_content_provider(
                   "text/event-stream", [&m, id, cursor](std::size_t, httplib::DataSink& sink) {
                     std::vector<ClientEvent> batch;
                     try {
                       batch = m.events(id, *cursor, 0.5);
                     } catch (const std::exception&) {
                       sink.done();
                       return true;
                     }
                     bool complete = false;
                     for (const auto& e : batch) {
                       const std::string frame = fmt::format("id: {}\nevent: {}\ndata: {}\n\n", e.seq, e.type,
                                                             to_json(e, id).dump());
                       if (!sink.write(frame.data(), frame.size())) return false;
                       *cursor = e.type == "resync" ? e.seq : e.seq + 1;
                       complete = complete || e.type == "session_complete";
                     }
                     if (complete) sink.done();
                     return true;
                   });
             }));
}

}  // namespace hrc
