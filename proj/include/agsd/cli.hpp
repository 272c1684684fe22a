#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "agsd/config.hpp"
#include "agsd/sim.hpp"

namespace agsd {

// Planning report: IF, I_max, thresholds, nominal boundaries, initial n_max.
nlohmann::json cmd_design(const RunConfig& config);

// Runs the Monte Carlo study. When config.output_dir is set, writes
// replicates.csv (one row per successful replicate) and summary.json there.
nlohmann::json cmd_simulate(const RunConfig& config);

// One monitoring look at the data file in config.monitor. Resumes from and
// persists to config.monitor.state_path when one is given.
nlohmann::json cmd_monitor(const RunConfig& config);

void write_replicates_csv(std::ostream& out, const McSummary& summary, int K);
nlohmann::json simulation_summary(const RunConfig& config, const McSummary& summary);

// Entry point behind the `agsd` executable. Returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace agsd
