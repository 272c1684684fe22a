#include "agsd/design.hpp"

#include <cmath>
#include <stdexcept>

#include "agsd/errors.hpp"
#include "agsd/numeric.hpp"

namespace agsd {

void DesignSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("design.alpha", "must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("design.beta", "must lie in (0, 1)");
  if (!std::isfinite(theta0)) throw ConfigError("design.theta0", "must be finite");
  if (!std::isfinite(thetaA) || thetaA == theta0) throw ConfigError("design.thetaA", "must be finite and differ from theta0");
  if (K < 1) throw ConfigError("design.K", "must be at least 1");
  if (static_cast<int>(fractions.size()) != K)
    throw ConfigError("design.fractions", "must have K = " + std::to_string(K) + " entries");
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!(fractions[k] > 0.0 && fractions[k] <= 1.0)) throw ConfigError("design.fractions", "entries must lie in (0, 1]");
    if (k > 0 && !(fractions[k] > fractions[k - 1])) throw ConfigError("design.fractions", "must be strictly increasing");
  }
  if (fractions.back() != 1.0) throw ConfigError("design.fractions", "last fraction must be 1");
  if (spending.family == SpendingFamily::power_family && !(spending.rho > 0.0))
    throw ConfigError("design.spending.rho", "must be positive");
  if (spending.alpha != alpha) throw ConfigError("design.spending.alpha", "must equal design.alpha");
  if (monitoring_cadence < 1) throw ConfigError("design.monitoring_cadence", "must be at least 1");
  if (nmax_update_cadence < 1) throw ConfigError("design.nmax_update_cadence", "must be at least 1");
  if (control_probability && !(*control_probability > 0.0 && *control_probability < 1.0))
    throw ConfigError("design.control_probability", "must lie in (0, 1)");
  if (control_probability && !(*control_probability + (thetaA - theta0) > 0.0 &&
                               *control_probability + (thetaA - theta0) < 1.0))
    throw ConfigError("design.control_probability", "control_probability + thetaA - theta0 must lie in (0, 1)");
  if (outcome_sd && !(*outcome_sd > 0.0)) throw ConfigError("design.outcome_sd", "must be positive");
  if (initial_nmax && *initial_nmax < 4) throw ConfigError("design.initial_nmax", "must be at least 4");
}

double max_information(double alpha, double beta, double theta0, double thetaA, double IF) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) throw DomainError("alpha and beta must lie in (0, 1)");
  if (thetaA == theta0) throw DomainError("thetaA must differ from theta0");
  if (!(IF > 0.0)) throw DomainError("inflation factor must be positive");
  const double z = normal_quantile(1.0 - alpha / 2.0) + normal_quantile(1.0 - beta);
  const double ratio = z / (thetaA - theta0);
  return ratio * ratio * IF;
}

std::vector<double> info_thresholds(double I_max, std::span<const double> fractions) {
  if (!(I_max > 0.0)) throw DomainError("maximum information must be positive");
  std::vector<double> out;
  out.reserve(fractions.size());
  for (double f : fractions) out.push_back(f * I_max);
  return out;
}

long project_nmax(long n_outcomes, double info_now, double I_max) {
  if (!(info_now > 0.0)) throw DomainError("current information must be positive");
  if (n_outcomes < 0) throw DomainError("outcome count must be non-negative");
  return static_cast<long>(std::ceil(static_cast<double>(n_outcomes) * I_max / info_now - 1e-9));
}

long initial_nmax(const DesignSpec& design, double IF) {
  if (design.initial_nmax) return *design.initial_nmax;
  const double za = normal_quantile(1.0 - design.alpha / 2.0);
  const double zb = normal_quantile(1.0 - design.beta);
  const double delta = design.thetaA - design.theta0;
  double per_arm;
  if (design.control_probability) {
    const double p0 = *design.control_probability;
    const double p1 = p0 + delta;
    const double pbar = 0.5 * (p0 + p1);
    const double root = za * std::sqrt(2.0 * pbar * (1.0 - pbar)) + zb * std::sqrt(p0 * (1.0 - p0) + p1 * (1.0 - p1));
    per_arm = root * root / (delta * delta);
  } else if (design.outcome_sd) {
    const double sd = *design.outcome_sd;
    per_arm = 2.0 * sd * sd * (za + zb) * (za + zb) / (delta * delta);
  } else {
    throw ConfigError("design.control_probability",
                      "one of control_probability, outcome_sd or initial_nmax is needed for n_max");
  }
  return static_cast<long>(std::ceil(2.0 * per_arm * IF - 1e-9));
}

DesignSummary summarize_design(const DesignSpec& design, const QuadratureOptions& q) {
  design.validate();
  DesignSummary s;
  // A single analysis at full information is the fixed-sample test itself.
  s.inflation = inflation_factor(design.fractions, design.spending, design.beta, q);
  s.I_max = max_information(design.alpha, design.beta, design.theta0, design.thetaA, s.inflation);
  s.thresholds = info_thresholds(s.I_max, design.fractions);
  s.nominal_boundaries = solve_boundaries(design.fractions, design.spending, q);
  if (design.control_probability || design.outcome_sd || design.initial_nmax)
    s.nmax = initial_nmax(design, s.inflation);
  return s;
}

// ---- monitoring -------------------------------------------------------------

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::running: return "running";
    case Verdict::reject: return "reject";
    case Verdict::fail_to_reject: return "fail_to_reject";
  }
  return "unknown";
}

Verdict parse_verdict(const std::string& s) {
  if (s == "running") return Verdict::running;
  if (s == "reject") return Verdict::reject;
  if (s == "fail_to_reject") return Verdict::fail_to_reject;
  throw std::invalid_argument("unknown verdict '" + s + "'");
}

MonitorState make_monitor_state(std::span<const double> thresholds, long projected_nmax) {
  if (thresholds.empty()) throw std::invalid_argument("at least one information threshold is required");
  for (std::size_t k = 1; k < thresholds.size(); ++k)
    if (!(thresholds[k] > thresholds[k - 1])) throw std::invalid_argument("thresholds must be increasing");
  MonitorState s;
  s.thresholds.assign(thresholds.begin(), thresholds.end());
  s.projected_nmax = projected_nmax;
  return s;
}

MonitorResult monitor_step(MonitorState state, const EstimateSnapshot& snapshot) {
  if (state.terminal()) throw TerminalState("monitor already reached a verdict: " + to_string(state.verdict));
  if (state.next_analysis >= state.K()) throw TerminalState("all analyses have been triggered");
  if (static_cast<int>(state.analyses_done.size()) != state.next_analysis)
    throw std::logic_error("previous trigger was not recorded");
  MonitorResult out{std::move(state), {}};
  if (snapshot.information >= out.state.thresholds[out.state.next_analysis]) {
    ++out.state.next_analysis;
    out.decision = {MonitorDecision::Kind::trigger, out.state.next_analysis};
  }
  return out;
}

MonitorResult monitor_force_final(MonitorState state) {
  if (state.terminal()) throw TerminalState("monitor already reached a verdict: " + to_string(state.verdict));
  if (static_cast<int>(state.analyses_done.size()) != state.next_analysis)
    throw std::logic_error("previous trigger was not recorded");
  MonitorResult out{std::move(state), {}};
  out.state.next_analysis = out.state.K();
  out.decision = {MonitorDecision::Kind::trigger, out.state.K()};
  return out;
}

MonitorState record_analysis(MonitorState state, const AnalysisRecord& record) {
  if (state.terminal()) throw TerminalState("monitor already reached a verdict: " + to_string(state.verdict));
  if (record.index != state.next_analysis)
    throw std::logic_error("analysis " + std::to_string(record.index) + " was not the one triggered");
  state.analyses_done.push_back(record);
  if (record.rejected) state.verdict = Verdict::reject;
  else if (record.index == state.K()) state.verdict = Verdict::fail_to_reject;
  return state;
}

}  // namespace agsd
