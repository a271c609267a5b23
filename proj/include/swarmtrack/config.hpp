#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "swarmtrack/environment.hpp"
#include "swarmtrack/trainer.hpp"
#include "swarmtrack/valuenet.hpp"

namespace swarmtrack {

/// Everything a training run needs. Any section or field may be omitted from
/// the file; missing values keep their defaults, unknown keys throw ConfigError.
struct ExperimentConfig {
  env::WorldConfig world;
  valuenet::NetConfig net;
  trainer::TrainConfig train;
};

nlohmann::json to_json(const env::WorldConfig& cfg);
nlohmann::json to_json(const valuenet::NetConfig& cfg);
nlohmann::json to_json(const trainer::TrainConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Each overload overwrites fields present in `j` on top of `out`.
void from_json(const nlohmann::json& j, env::WorldConfig& out);
void from_json(const nlohmann::json& j, valuenet::NetConfig& out);
void from_json(const nlohmann::json& j, trainer::TrainConfig& out);
void from_json(const nlohmann::json& j, ExperimentConfig& out);

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Reads a whole file; throws ConfigError if it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

}  // namespace swarmtrack
