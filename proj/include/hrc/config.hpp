#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "hrc/agents.hpp"
#include "hrc/engine.hpp"
#include "hrc/world.hpp"

namespace hrc {

// Everything needed to run sessions: the board, the scripted human, planner
// and engine settings. Unset keys keep their defaults.
struct ExperimentConfig {
  ScenarioConfig scenario = ScenarioConfig::defaults();
  std::string profile = "follow_high";  // preset name, or "custom"
  HumanPolicy policy = preset(Profile::follow_high);
  Difficulty difficulty = Difficulty::medium;
  PlannerConfig planner;
  EngineParams engine;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Strict reader: unknown keys and type mismatches raise ValidationError
// with a dotted path such as "tables.human[0].distance_m".
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& config);

// Sets profile and policy from a preset name.
void apply_profile(ExperimentConfig& config, std::string_view name);

RunConfig make_run_config(const ExperimentConfig& config, bool log_plans = true);

}  // namespace hrc
