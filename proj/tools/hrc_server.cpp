// Interactive session service over HTTP.

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "hrc/service.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-robot collaboration session service"};
  std::string host = "127.0.0.1", config_path, log_dir;
  int port = 8080;
  hrc::ServiceConfig cfg;
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  app.add_option("--time-scale", cfg.time_scale, "Simulated seconds per wall-clock second")
      ->check(CLI::PositiveNumber);
  app.add_option("--memorize-s", cfg.memorize_s, "Memorization deadline in seconds")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", config_path, "Experiment config (JSON) used as session defaults");
  app.add_option("--log-dir", log_dir, "Write finished session logs here");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) cfg.base = hrc::load_experiment_config(config_path);
    if (!log_dir.empty()) cfg.log_dir = log_dir;
    hrc::SessionManager manager(cfg);
    httplib::Server server;
    hrc::register_routes(server, manager);

    std::atomic<bool> running{true};
    std::thread ticker([&] {
      while (running) {
        manager.tick();
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    });
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << host << ':' << port << std::endl;
    const bool ok = server.listen(host, port);
    running = false;
    ticker.join();
    return ok ? 0 : 1;
  } catch (const hrc::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  }
}
