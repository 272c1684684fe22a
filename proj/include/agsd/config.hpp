#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "agsd/design.hpp"
#include "agsd/estimators.hpp"
#include "agsd/sim.hpp"

namespace agsd {

enum class Command { design, simulate, monitor };

std::string to_string(Command command);
Command parse_command(const std::string& name);

// Inputs of the `monitor` command.
struct MonitorInputs {
  std::string data_path;   // subject CSV
  std::string state_path;  // MonitorState JSON; resumed when the file exists
  std::optional<double> calendar_time;  // defaults to the latest event in the data
  std::vector<double> visit_days;
  std::uint64_t seed = 1;  // bootstrap seed for the analysis covariance
};

struct RunConfig {
  Command command = Command::design;
  DesignSpec design;
  DgmSpec dgm;
  AnalysisPlan plan;
  McOptions mc;
  MonitorInputs monitor;
  std::string output_dir;
};

// Every field is optional except design.thetaA; unknown keys are rejected.
// Failures raise ConfigError with the dotted path of the offending field.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// The fully resolved configuration, defaults included.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const DesignSpec& design);
nlohmann::json to_json(const DgmSpec& dgm);
nlohmann::json to_json(const AnalysisPlan& plan);
nlohmann::json to_json(const EstimatorSpec& spec);

nlohmann::json to_json(const AnalysisRecord& record);
nlohmann::json to_json(const MonitorState& state);
MonitorState monitor_state_from_json(const nlohmann::json& j);

nlohmann::json to_json(const McResult& result);

}  // namespace agsd
