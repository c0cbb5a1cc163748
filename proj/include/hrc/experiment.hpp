#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hrc/config.hpp"
#include "hrc/engine.hpp"

namespace hrc {

inline constexpr std::array<std::string_view, 8> kMetricNames{
    "n_wrong_h", "n_assign_h_to_r", "n_assign_r_to_h", "d_h",
    "d_r",       "n_tasks_h",       "n_tasks_r",       "t_total_min"};

std::array<double, 8> metric_values(const SessionMetrics& m);

// One grid cell: a fully resolved configuration run `repetitions` times with
// seeds base_seed, base_seed + 1, ...
struct GridCell {
  ExperimentConfig config;
  int repetitions = 100;
  std::uint64_t base_seed = 1;
};

struct ExperimentGrid {
  std::vector<GridCell> cells;
  void validate() const;
};

// Grid file layout:
//   {"repetitions": 100, "base_seed": 1,
//    "cells": [{"profile": "lead_low", "planner": {...}, "repetitions": 10}]}
// Cell keys override the top-level defaults and `base`.
ExperimentGrid parse_grid(const nlohmann::json& j, const ExperimentConfig& base);

// The four enacted profiles of the evaluation, one cell each.
ExperimentGrid default_grid(const ExperimentConfig& base, int repetitions, std::uint64_t base_seed);

struct RunRow {
  int cell = 0;
  std::string profile;
  int rep = 0;
  std::uint64_t seed = 0;
  std::string status;  // complete, aborted or failed
  std::string diagnostic;
  SessionMetrics metrics;
  std::vector<nlohmann::json> records;  // kept only when requested

  bool operator==(const RunRow& o) const {
    return cell == o.cell && profile == o.profile && rep == o.rep && seed == o.seed &&
           status == o.status && metrics == o.metrics;
  }
};

struct CellSummary {
  int cell = 0;
  std::string profile;
  int runs = 0;
  int failed = 0;  // aborted or failed rows, excluded from the statistics
  std::array<double, 8> mean{};
  std::array<double, 8> sd{};  // sample standard deviation, 0 for a single run
};

struct GridResult {
  std::vector<RunRow> rows;  // ordered by (cell, rep)
  std::vector<CellSummary> summary;
};

struct GridOptions {
  unsigned threads = 0;  // 0 picks the hardware concurrency
  bool keep_logs = false;
  bool log_plans = false;
};

GridResult run_grid(const ExperimentGrid& grid, const GridOptions& options = {});

std::vector<CellSummary> summarize(const std::vector<RunRow>& rows);

std::string rows_csv_header();
std::string to_csv(const RunRow& row);
// Inverse of to_csv. Throws ValidationError.
RunRow run_row_from_csv(std::string_view line);

std::string summary_csv(const std::vector<CellSummary>& summary);

struct TrajectoryRow {
  int cell = 0;
  std::string profile;
  int rep = 0;
  std::uint64_t seed = 0;
  BeliefPoint point;
};

// Belief expectations per step and run. Throws LogParseError when a run has
// no retained log or its log holds no belief snapshots.
std::vector<TrajectoryRow> export_belief_trajectories(const std::vector<RunRow>& rows);
std::string to_jsonl(const std::vector<TrajectoryRow>& rows);

}  // namespace hrc
