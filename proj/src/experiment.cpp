#include "hrc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <thread>

#include <fmt/format.h>

namespace hrc {

using nlohmann::json;

std::array<double, 8> metric_values(const SessionMetrics& m) {
  return {static_cast<double>(m.n_wrong_h), static_cast<double>(m.n_assign_h_to_r),
          static_cast<double>(m.n_assign_r_to_h), m.d_h, m.d_r,
          static_cast<double>(m.n_tasks_h), static_cast<double>(m.n_tasks_r), m.t_total_min};
}

void ExperimentGrid::validate() const {
  if (cells.empty()) throw ValidationError("cells", "grid has no cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].repetitions < 1)
      throw ValidationError(fmt::format("cells[{}].repetitions", i), "must be >= 1");
    cells[i].config.validate();
  }
}

namespace {

int read_reps(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError(path, "expected an integer");
  const int n = j.get<int>();
  if (n < 1) throw ValidationError(path, "must be >= 1");
  return n;
}

std::uint64_t read_seed(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    throw ValidationError(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

}  // namespace

ExperimentGrid parse_grid(const json& j, const ExperimentConfig& base) {
  if (!j.is_object()) throw ValidationError("grid", "expected an object");
  for (const auto& [key, _] : j.items())
    if (key != "repetitions" && key != "base_seed" && key != "cells")
      throw ValidationError(key, "unknown key");
  int reps = 100;
  std::uint64_t seed = 1;
  if (j.contains("repetitions")) reps = read_reps(j["repetitions"], "repetitions");
  if (j.contains("base_seed")) seed = read_seed(j["base_seed"], "base_seed");
  if (!j.contains("cells") || !j["cells"].is_array())
    throw ValidationError("cells", "expected an array of cells");

  ExperimentGrid grid;
  const json base_json = to_json(base);
  const auto& cells = j["cells"];
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string path = fmt::format("cells[{}]", i);
    if (!cells[i].is_object()) throw ValidationError(path, "expected an object");
    GridCell cell;
    cell.repetitions = reps;
    cell.base_seed = seed;
    json merged = base_json;
    for (const auto& [key, value] : cells[i].items()) {
      if (key == "repetitions") {
        cell.repetitions = read_reps(value, path + ".repetitions");
      } else if (key == "base_seed") {
        cell.base_seed = read_seed(value, path + ".base_seed");
      } else if (key == "profile" || key == "difficulty") {
        merged[key] = value;
      } else if (key == "planner" || key == "estimator" || key == "engine") {
        if (!value.is_object()) throw ValidationError(path + "." + key, "expected an object");
        merged[key].merge_patch(value);
      } else {
        throw ValidationError(path + "." + key, "unknown key");
      }
    }
    try {
      cell.config = parse_experiment_config(merged);
    } catch (const ValidationError& e) {
      throw ValidationError(path + "." + e.field(), e.what());
    }
    grid.cells.push_back(std::move(cell));
  }
  grid.validate();
  return grid;
}

ExperimentGrid default_grid(const ExperimentConfig& base, int repetitions, std::uint64_t base_seed) {
  ExperimentGrid grid;
  for (Profile p : {Profile::follow_high, Profile::follow_low, Profile::lead_high, Profile::lead_low}) {
    GridCell cell;
    cell.config = base;
    apply_profile(cell.config, to_string(p));
    cell.repetitions = repetitions;
    cell.base_seed = base_seed;
    grid.cells.push_back(std::move(cell));
  }
  grid.validate();
  return grid;
}

GridResult run_grid(const ExperimentGrid& grid, const GridOptions& options) {
  grid.validate();
  std::vector<RunConfig> configs;
  std::vector<RunRow> rows;
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    const GridCell& cell = grid.cells[c];
    configs.push_back(make_run_config(cell.config, options.log_plans));
    for (int rep = 0; rep < cell.repetitions; ++rep) {
      RunRow row;
      row.cell = static_cast<int>(c);
      row.profile = cell.config.profile;
      row.rep = rep;
      row.seed = cell.base_seed + static_cast<std::uint64_t>(rep);
      rows.push_back(std::move(row));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      RunRow& row = rows[i];
      try {
        SessionResult r = run_session(configs[row.cell], row.seed);
        row.status = r.status;
        row.diagnostic = r.diagnostic;
        row.metrics = r.metrics;
        if (options.keep_logs) row.records = std::move(r.records);
      } catch (const std::exception& e) {
        row.status = "failed";
        row.diagnostic = e.what();
      }
    }
  };
  unsigned n = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, rows.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  GridResult result;
  result.summary = summarize(rows);
  result.rows = std::move(rows);
  return result;
}

std::vector<CellSummary> summarize(const std::vector<RunRow>& rows) {
  std::vector<CellSummary> out;
  for (const RunRow& row : rows) {
    if (out.empty() || out.back().cell != row.cell) {
      out.push_back(CellSummary{});
      out.back().cell = row.cell;
      out.back().profile = row.profile;
    }
  }
  for (CellSummary& s : out) {
    std::vector<std::array<double, 8>> values;
    for (const RunRow& row : rows) {
      if (row.cell != s.cell) continue;
      ++s.runs;
      if (row.status != "complete") {
        ++s.failed;
        continue;
      }
      values.push_back(metric_values(row.metrics));
    }
    if (values.empty()) continue;
    const double n = static_cast<double>(values.size());
    for (std::size_t k = 0; k < 8; ++k) {
      double sum = 0.0;
      for (const auto& v : values) sum += v[k];
      s.mean[k] = sum / n;
      double ss = 0.0;
      for (const auto& v : values) ss += (v[k] - s.mean[k]) * (v[k] - s.mean[k]);
      s.sd[k] = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
  }
  return out;
}

std::string rows_csv_header() { return "cell,profile,rep,seed,status," + metrics_csv_header(); }

std::string to_csv(const RunRow& row) {
  return fmt::format("{},{},{},{},{},{}", row.cell, row.profile, row.rep, row.seed, row.status,
                     to_csv(row.metrics));
}

RunRow run_row_from_csv(std::string_view line) {
  std::array<std::string_view, 5> head;
  for (auto& field : head) {
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ValidationError("row", "too few fields");
    field = line.substr(0, comma);
    line.remove_prefix(comma + 1);
  }
  RunRow row;
  auto integer = [](std::string_view s, const char* field) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
      throw ValidationError(field, fmt::format("'{}' is not a non-negative integer", s));
    return v;
  };
  row.cell = static_cast<int>(integer(head[0], "cell"));
  row.profile = std::string(head[1]);
  row.rep = static_cast<int>(integer(head[2], "rep"));
  row.seed = integer(head[3], "seed");
  row.status = std::string(head[4]);
  if (row.status != "complete" && row.status != "aborted" && row.status != "failed")
    throw ValidationError("status", fmt::format("unknown status '{}'", row.status));
  row.metrics = metrics_from_csv(line);
  return row;
}

std::string summary_csv(const std::vector<CellSummary>& summary) {
  std::string out = "cell,profile,runs,failed";
  for (auto name : kMetricNames) out += fmt::format(",{}_mean,{}_sd", name, name);
  out += '\n';
  for (const auto& s : summary) {
    out += fmt::format("{},{},{},{}", s.cell, s.profile, s.runs, s.failed);
    for (std::size_t k = 0; k < 8; ++k) out += fmt::format(",{},{}", s.mean[k], s.sd[k]);
    out += '\n';
  }
  return out;
}

std::vector<TrajectoryRow> export_belief_trajectories(const std::vector<RunRow>& rows) {
  std::vector<TrajectoryRow> out;
  for (const RunRow& row : rows) {
    if (row.records.empty())
      throw LogParseError(fmt::format("run {}/{} has no retained log", row.profile, row.rep));
    for (const BeliefPoint& p : belief_trajectory(row.records))
      out.push_back(TrajectoryRow{row.cell, row.profile, row.rep, row.seed, p});
  }
  return out;
}

std::string to_jsonl(const std::vector<TrajectoryRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += json{{"cell", r.cell},
                {"profile", r.profile},
                {"rep", r.rep},
                {"seed", r.seed},
                {"step", r.point.step},
                {"decision", r.point.decision},
                {"e_pf", r.point.e_pf},
                {"e_pe", r.point.e_pe}}
               .dump();
    out += '\n';
  }
  return out;
}

}  // namespace hrc
