// Batch front end: single runs, experiment grids and log replay.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "hrc/config.hpp"
#include "hrc/engine.hpp"
#include "hrc/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kValidationExit = 2;
constexpr int kMismatchExit = 3;
constexpr int kAbortExit = 4;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hrc::ValidationError("path", fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hrc::ValidationError("path", fmt::format("cannot write {}", path.string()));
  out << text;
}

hrc::ExperimentConfig base_config(const std::string& config_path) {
  return config_path.empty() ? hrc::ExperimentConfig{} : hrc::load_experiment_config(config_path);
}

int cmd_run(const std::string& config_path, const std::string& profile, const std::string& difficulty,
            std::uint64_t seed, const std::string& out) {
  hrc::ExperimentConfig cfg = base_config(config_path);
  if (!profile.empty()) hrc::apply_profile(cfg, profile);
  if (!difficulty.empty()) cfg.difficulty = hrc::parse_difficulty(difficulty);
  const hrc::SessionResult r = hrc::run_session(hrc::make_run_config(cfg), seed);
  if (!out.empty()) write_file(out, r.log_text());
  std::cout << "profile,seed,status," << hrc::metrics_csv_header() << '\n'
            << cfg.profile << ',' << seed << ',' << r.status << ',' << hrc::to_csv(r.metrics) << '\n';
  if (r.status != "complete") {
    std::cerr << "session aborted: " << r.diagnostic << '\n';
    return kAbortExit;
  }
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& grid_file, int reps, std::uint64_t seed,
             const std::string& out_dir, unsigned threads, bool logs) {
  const hrc::ExperimentConfig base = base_config(config_path);
  hrc::ExperimentGrid grid;
  if (grid_file.empty()) {
    grid = hrc::default_grid(base, reps, seed);
  } else {
    const json j = json::parse(read_file(grid_file), nullptr, false);
    if (j.is_discarded()) throw hrc::ValidationError("grid", "grid file is not valid JSON");
    grid = hrc::parse_grid(j, base);
  }
  hrc::GridOptions opt;
  opt.threads = threads;
  opt.keep_logs = true;
  opt.log_plans = logs;
  const hrc::GridResult result = hrc::run_grid(grid, opt);

  std::string rows = hrc::rows_csv_header() + '\n';
  for (const auto& row : result.rows) rows += hrc::to_csv(row) + '\n';
  const std::string summary = hrc::summary_csv(result.summary);
  std::vector<hrc::RunRow> finished;
  for (const auto& row : result.rows)
    if (!row.records.empty()) finished.push_back(row);
  const std::string trajectories = hrc::to_jsonl(hrc::export_belief_trajectories(finished));

  if (out_dir.empty()) {
    std::cout << summary;
  } else {
    const fs::path dir(out_dir);
    write_file(dir / "runs.csv", rows);
    write_file(dir / "summary.csv", summary);
    write_file(dir / "trajectories.jsonl", trajectories);
    if (logs)
      for (const auto& row : result.rows) {
        std::string text;
        for (const auto& r : row.records) text += r.dump() + '\n';
        write_file(dir / "logs" / fmt::format("cell{}_{}_rep{}.jsonl", row.cell, row.profile, row.rep), text);
      }
    std::cout << summary;
  }
  int failed = 0;
  for (const auto& row : result.rows) {
    if (row.status == "complete") continue;
    ++failed;
    std::cerr << fmt::format("{} rep {} seed {}: {} ({})\n", row.profile, row.rep, row.seed, row.status,
                             row.diagnostic);
  }
  return failed ? kAbortExit : 0;
}

int cmd_replay(const std::string& log_path) {
  const auto records = hrc::parse_log(read_file(log_path));
  const hrc::SessionMetrics m = hrc::compute_metrics(records);
  std::cout << hrc::metrics_csv_header() << '\n' << hrc::to_csv(m) << '\n';
  for (const auto& r : records) {
    if (r.value("type", "") != "end" || !r.contains("metrics")) continue;
    if (hrc::metrics_from_json(r["metrics"]) != m) {
      std::cerr << "recomputed metrics differ from the recorded ones\n";
      return kMismatchExit;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-robot collaboration simulator"};
  app.require_subcommand(1);

  std::string config_path, profile, difficulty, out, grid_file, out_dir, log_path;
  std::uint64_t seed = 1;
  int reps = 100;
  unsigned threads = 0;
  bool logs = false;

  auto* run = app.add_subcommand("run", "Run one session with a scripted human");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--profile", profile, "follow_high, follow_low, lead_high, lead_low or lead_drift");
  run->add_option("--difficulty", difficulty, "easy, medium or difficult");
  run->add_option("--seed", seed, "Random seed");
  run->add_option("--out", out, "Write the event log (JSONL) here");

  auto* grid = app.add_subcommand("grid", "Run a Monte-Carlo grid of sessions");
  grid->add_option("--config", config_path, "Base experiment config (JSON)");
  grid->add_option("--grid-file", grid_file, "Grid definition (JSON); default: the four enacted profiles");
  grid->add_option("--reps", reps, "Repetitions per cell for the default grid")->check(CLI::PositiveNumber);
  grid->add_option("--seed", seed, "Base seed for the default grid");
  grid->add_option("--out-dir", out_dir, "Write runs.csv, summary.csv and trajectories.jsonl here");
  grid->add_option("--threads", threads, "Worker threads (0 = all cores)");
  grid->add_flag("--logs", logs, "Also write every run's event log, plans included");

  auto* replay = app.add_subcommand("replay", "Recompute metrics from an event log");
  replay->add_option("--log", log_path, "Event log (JSONL)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*run) return cmd_run(config_path, profile, difficulty, seed, out);
    if (*grid) return cmd_grid(config_path, grid_file, reps, seed, out_dir, threads, logs);
    if (*replay) return cmd_replay(log_path);
  } catch (const hrc::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidationExit;
  } catch (const hrc::LogParseError& e) {
    std::cerr << "malformed log: " << e.what() << '\n';
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
