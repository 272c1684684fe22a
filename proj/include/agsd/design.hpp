#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agsd/boundaries.hpp"
#include "agsd/estimators.hpp"

namespace agsd {

struct DesignSpec {
  double alpha = 0.05;  // two-sided
  double beta = 0.2;
  double theta0 = 0.0;
  double thetaA = 0.0;
  int K = 1;
  std::vector<double> fractions{1.0};
  SpendingFunction spending;
  int monitoring_cadence = 10;    // outcomes between information checks
  int nmax_update_cadence = 50;   // outcomes between n_max re-projections
  // Inputs for the conservative initial n_max (no adjustment gain assumed).
  std::optional<double> control_probability;  // binary outcomes
  std::optional<double> outcome_sd;           // continuous outcomes
  std::optional<long> initial_nmax;           // explicit override

  void validate() const;  // throws ConfigError naming the field
};

double max_information(double alpha, double beta, double theta0, double thetaA, double IF);
std::vector<double> info_thresholds(double I_max, std::span<const double> fractions);
long project_nmax(long n_outcomes, double info_now, double I_max);

// Total sample size (both arms) from the fixed-sample formula times IF,
// rounded up to an even number so that 1:1 allocation is exact.
long initial_nmax(const DesignSpec& design, double IF);

// Derived planning quantities.
struct DesignSummary {
  double inflation = 1.0;
  double I_max = 0.0;
  std::vector<double> thresholds;
  BoundarySet nominal_boundaries;
  std::optional<long> nmax;
};

DesignSummary summarize_design(const DesignSpec& design, const QuadratureOptions& q = {});

// ---- monitoring state machine ----------------------------------------------

enum class Verdict { running, reject, fail_to_reject };
std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

struct AnalysisRecord {
  int index = 0;  // 1-based
  double calendar_time = 0.0;
  long n_enrolled = 0;
  long n_outcomes = 0;
  double information = 0.0;  // information of the tested statistic
  double estimate = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double fraction = 0.0;
  double critical = 0.0;
  bool rejected = false;
  bool forced = false;  // fired by the plateau rule rather than a threshold
};

struct MonitorState {
  std::vector<double> thresholds;
  int next_analysis = 0;  // 0-based index of the next threshold
  std::vector<AnalysisRecord> analyses_done;
  bool recruitment_open = true;
  long projected_nmax = 0;
  Verdict verdict = Verdict::running;

  bool terminal() const { return verdict != Verdict::running; }
  int K() const { return static_cast<int>(thresholds.size()); }
};

struct MonitorDecision {
  enum class Kind { continue_monitoring, trigger } kind = Kind::continue_monitoring;
  int analysis = 0;  // 1-based analysis to conduct when kind == trigger
};

struct MonitorResult {
  MonitorState state;
  MonitorDecision decision;
};

MonitorState make_monitor_state(std::span<const double> thresholds, long projected_nmax);

// Compares snapshot.information with the next threshold. Fires at most one
// analysis per call; callers re-submit the same snapshot after recording the
// analysis to fire any further thresholds it has already passed.
MonitorResult monitor_step(MonitorState state, const EstimateSnapshot& snapshot);

// Fires the final analysis regardless of information (plateau rule).
MonitorResult monitor_force_final(MonitorState state);

// Records the outcome of the analysis just triggered and updates the verdict:
// reject on a crossing, fail_to_reject after the K-th analysis otherwise.
MonitorState record_analysis(MonitorState state, const AnalysisRecord& record);

}  // namespace agsd
