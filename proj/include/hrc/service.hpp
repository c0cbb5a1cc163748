#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hrc/config.hpp"
#include "hrc/engine.hpp"

namespace httplib {
class Server;
}

namespace hrc {

enum class SessionPhase { memorize, collaborate, finished };
std::string_view to_string(SessionPhase p);

// Error surfaced to API clients. `status` is the HTTP status, `code` a
// stable machine-readable reason ("not_found", "phase", a protocol rule...).
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }
  nlohmann::json to_json() const;

 private:
  int status_;
  std::string code_;
  std::string field_;
};

struct ServiceConfig {
  ExperimentConfig base;
  double time_scale = 1.0;      // simulated seconds per wall-clock second
  double memorize_s = 90.0;     // memorization deadline
  std::size_t max_lag = 1024;   // events a subscriber may fall behind before a resync
  std::optional<std::filesystem::path> log_dir;  // finished logs are written here
};

struct ClientEvent {
  std::uint64_t seq = 0;
  std::string type;  // state_snapshot, robot_action, assignment_offer, assignment_verdict,
                     // belief_update, session_complete, resync
  nlohmann::json payload;
};

nlohmann::json to_json(const ClientEvent& e, const std::string& session_id);

// Seconds on a monotonic wall clock. Injectable for tests.
using WallClock = std::function<double()>;
WallClock steady_wall_clock();

// Owns the interactive sessions. Every call is thread-safe; calls on one
// session are applied in arrival order.
class SessionManager {
 public:
  explicit SessionManager(ServiceConfig config, WallClock clock = steady_wall_clock());
  ~SessionManager();

  // Request keys: difficulty, seed, config (experiment-config overrides).
  // Returns the handle, the partial pattern and the memorization deadline.
  nlohmann::json create(const nlohmann::json& request);
  // Full pattern; only during the memorize phase.
  nlohmann::json pattern(const std::string& id);
  nlohmann::json start(const std::string& id);
  nlohmann::json state(const std::string& id);
  // Validates and applies one human action; throws ServiceError carrying
  // the protocol rule when it is illegal.
  nlohmann::json submit(const std::string& id, const nlohmann::json& action);
  nlohmann::json finish(const std::string& id);
  // Only once the session is finished.
  std::string log(const std::string& id);
  nlohmann::json metrics(const std::string& id);

  // Events with seq >= from. Blocks up to `wait_s` wall seconds when none is
  // available yet. A subscriber more than max_lag events behind receives a
  // resync marker followed by the latest snapshot.
  std::vector<ClientEvent> events(const std::string& id, std::uint64_t from, double wait_s = 0.0,
                                  std::size_t limit = 256);

  // Lets simulated time catch up with the wall clock in every session.
  void tick();
  std::vector<std::string> ids() const;

 private:
  struct Entry;
  std::shared_ptr<Entry> find(const std::string& id) const;
  void sync(Entry& e);
  void publish_new_records(Entry& e);
  void emit(Entry& e, std::string type, nlohmann::json payload);
  nlohmann::json snapshot(const Entry& e) const;
  void finish_locked(Entry& e, std::string_view status);

  ServiceConfig config_;
  WallClock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
};

// Routes:
//   POST /sessions                 GET  /sessions/{id}/pattern
//   POST /sessions/{id}/start      GET  /sessions/{id}/state
//   POST /sessions/{id}/actions    GET  /sessions/{id}/events?from=N  (server-sent events)
//   POST /sessions/{id}/finish     GET  /sessions/{id}/log
//   GET  /sessions/{id}/metrics
void register_routes(httplib::Server& server, SessionManager& manager);

}  // namespace hrc
