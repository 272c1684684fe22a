#include "agsd/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include "CLI11.hpp"

#include "agsd/covariance.hpp"
#include "agsd/errors.hpp"
#include "agsd/numeric.hpp"
#include "agsd/orthogonalize.hpp"

namespace agsd {

using nlohmann::json;

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

json finite_or_string(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "inf" : "-inf";
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

const AnalysisRecord* find_analysis(const std::vector<AnalysisRecord>& analyses, int index) {
  for (const auto& a : analyses)
    if (a.index == index) return &a;
  return nullptr;
}

}  // namespace

// ---- design -----------------------------------------------------------------

json cmd_design(const RunConfig& config) {
  const DesignSummary s = summarize_design(config.design);
  json critical = json::array();
  for (double c : s.nominal_boundaries.critical) critical.push_back(finite_or_string(c));
  return {{"config", to_json(config)},
          {"inflation_factor", s.inflation},
          {"max_information", s.I_max},
          {"thresholds", s.thresholds},
          {"boundaries",
           {{"fractions", s.nominal_boundaries.fractions},
            {"critical", critical},
            {"cumulative_alpha", s.nominal_boundaries.spent}}},
          {"initial_nmax", s.nmax ? json(*s.nmax) : json(nullptr)}};
}

// ---- simulate ---------------------------------------------------------------

void write_replicates_csv(std::ostream& out, const McSummary& summary, int K) {
  const bool orth = summary.orthogonalized.has_value();
  out << "replicate,seed,plateau,initial_nmax,final_nmax,enrolled_total,"
         "raw_verdict,raw_analysis,raw_n,raw_time,raw_information";
  if (orth) out << ",orth_verdict,orth_analysis,orth_n,orth_time,orth_information";
  for (int k = 1; k <= K; ++k) {
    out << ",time_" << k << ",n_" << k << ",estimate_" << k << ",raw_z_" << k;
    if (orth) out << ",orth_estimate_" << k << ",orth_z_" << k;
  }
  out << '\n';
  auto decision = [&](const SequenceResult& s) {
    const AnalysisRecord& d = s.decision();
    out << ',' << to_string(s.state.verdict) << ',' << d.index << ',' << d.n_enrolled << ',' << fmt(d.calendar_time)
        << ',' << fmt(d.information);
  };
  for (const auto& rec : summary.records) {
    out << rec.replicate << ',' << rec.seed << ',' << (rec.plateau ? 1 : 0) << ',' << rec.initial_nmax << ','
        << rec.final_nmax << ',' << rec.enrolled_total;
    decision(rec.raw);
    if (orth) decision(*rec.orthogonalized);
    for (int k = 1; k <= K; ++k) {
      const AnalysisTiming* timing = nullptr;
      for (const auto& t : rec.timings)
        if (t.index == k) timing = &t;
      const AnalysisRecord* raw = find_analysis(rec.raw.analyses, k);
      if (timing) out << ',' << fmt(timing->calendar_time) << ',' << timing->n_enrolled << ',' << fmt(timing->estimate);
      else out << ",,,";
      out << ',' << (raw ? fmt(raw->z) : "");
      if (orth) {
        const AnalysisRecord* o = find_analysis(rec.orthogonalized->analyses, k);
        out << ',' << (o ? fmt(o->estimate) : "") << ',' << (o ? fmt(o->z) : "");
      }
    }
    out << '\n';
  }
}

json simulation_summary(const RunConfig& config, const McSummary& summary) {
  const int K = config.design.K;
  json corr_raw = json::array(), corr_orth = json::array();
  for (int k = 2; k <= K; ++k) {
    corr_raw.push_back(finite_or_string(increment_correlation(summary.records, k, false)));
    if (summary.orthogonalized) corr_orth.push_back(finite_or_string(increment_correlation(summary.records, k, true)));
  }
  const auto marginals = dgm_marginals(config.dgm);
  json j = {{"config", to_json(config)},
            {"raw", to_json(summary.raw)},
            {"failed", summary.failed},
            {"failures", summary.failures},
            {"plateau", summary.plateau},
            {"population_risk", {{"treated", marginals[0]}, {"control", marginals[1]}}},
            {"increment_correlation", {{"raw", corr_raw}}}};
  if (summary.orthogonalized) {
    j["orthogonalized"] = to_json(*summary.orthogonalized);
    j["raw_only_rejections"] = summary.raw_only;
    j["orthogonalized_only_rejections"] = summary.orthogonalized_only;
    j["increment_correlation"]["orthogonalized"] = corr_orth;
  }
  return j;
}

json cmd_simulate(const RunConfig& config) {
  McOptions options = config.mc;
  options.keep_records = true;
  const McSummary summary = monte_carlo(config.dgm, config.design, config.plan, options);
  json j = simulation_summary(config, summary);
  if (!config.output_dir.empty()) {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "replicates.csv");
    if (!csv) throw Error("cannot write '" + (dir / "replicates.csv").string() + "'");
    write_replicates_csv(csv, summary, config.design.K);
    write_json_file(dir / "summary.json", j);
  }
  return j;
}

// ---- monitor ----------------------------------------------------------------

namespace {

// Latest calendar time the data file can speak for: the last entry or the
// last outcome it reports.
double latest_event(const TrialDataset& data) {
  double t = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    t = std::max(t, data.entry_time(i));
    if (!std::isnan(data.outcome(i))) t = std::max(t, data.availability_time(i));
  }
  return t;
}

struct StoredMonitor {
  MonitorState state;
  std::vector<double> raw_estimates;  // unorthogonalized estimate of each analysis done
};

StoredMonitor load_monitor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("monitor.state", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("monitor.state", std::string("invalid JSON: ") + e.what());
  }
  StoredMonitor m;
  m.state = monitor_state_from_json(j.value("state", json::object()));
  if (j.contains("raw_estimates")) m.raw_estimates = j.at("raw_estimates").get<std::vector<double>>();
  return m;
}

void check_resumed(const StoredMonitor& m, const std::vector<double>& thresholds, double t) {
  const MonitorState& s = m.state;
  if (s.K() != static_cast<int>(thresholds.size()))
    throw StateMismatch("saved state has K = " + std::to_string(s.K()) + " analyses, configuration has K = " +
                        std::to_string(thresholds.size()));
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (std::fabs(s.thresholds[k] - thresholds[k]) > 1e-9 * std::max(1.0, thresholds[k]))
      throw StateMismatch("saved threshold " + std::to_string(k + 1) + " (" + std::to_string(s.thresholds[k]) +
                          ") differs from the configured design (" + std::to_string(thresholds[k]) + ")");
  }
  if (m.raw_estimates.size() != s.analyses_done.size())
    throw StateMismatch("saved state lists " + std::to_string(s.analyses_done.size()) + " analyses but " +
                        std::to_string(m.raw_estimates.size()) + " stored estimates");
  for (const auto& a : s.analyses_done)
    if (a.calendar_time > t)
      throw StateMismatch("analysis " + std::to_string(a.index) + " was at time " + std::to_string(a.calendar_time) +
                          ", after the current look at " + std::to_string(t));
}

}  // namespace

json cmd_monitor(const RunConfig& config) {
  const DesignSummary design = summarize_design(config.design);
  const AnalysisPlan& plan = config.plan;
  const int K = config.design.K;
  CsvReadOptions csv;
  csv.visit_days = config.monitor.visit_days;
  const TrialDataset data = read_trial_csv_file(config.monitor.data_path, csv);
  const double t = config.monitor.calendar_time.value_or(latest_event(data));

  StoredMonitor stored;
  const bool resumed = !config.monitor.state_path.empty() && std::filesystem::exists(config.monitor.state_path);
  if (resumed) {
    stored = load_monitor_file(config.monitor.state_path);
    check_resumed(stored, design.thresholds, t);
  } else {
    stored.state = make_monitor_state(design.thresholds, design.nmax.value_or(0));
  }
  MonitorState& state = stored.state;
  if (state.terminal()) throw TerminalState("trial already concluded: " + to_string(state.verdict));

  const double theta0 = config.design.theta0;
  const std::uint64_t seed = config.monitor.seed;
  json analyses = json::array();
  std::optional<EstimateSnapshot> snap;
  while (!state.terminal() && state.next_analysis < K) {
    const int next = state.next_analysis;
    snap = monitoring_estimate(data, t, plan.estimators[static_cast<std::size_t>(next)], plan.monitoring_variance,
                               plan.bootstrap_replicates, stream_seed(seed, static_cast<std::uint64_t>(next), 3),
                               theta0);
    if (!snap) break;
    MonitorResult step = monitor_step(std::move(state), *snap);
    state = std::move(step.state);
    if (step.decision.kind != MonitorDecision::Kind::trigger) break;

    // Analysis `index` at time t, jointly with the earlier analyses.
    const int index = step.decision.analysis;
    const EstimatorSpec& spec = plan.estimators[static_cast<std::size_t>(index) - 1];
    const PointEstimate pe = point_estimate(data, t, spec);
    std::vector<double> times;
    std::vector<EstimatorSpec> specs;
    if (plan.orthogonalize) {
      for (const auto& a : state.analyses_done) {
        times.push_back(a.calendar_time);
        specs.push_back(plan.estimators[static_cast<std::size_t>(a.index) - 1]);
      }
    }
    times.push_back(t);
    specs.push_back(spec);
    CovarianceEstimate cov = analysis_covariance(data, times, specs, plan.analysis_variance, plan.bootstrap_replicates,
                                                 stream_seed(seed, static_cast<std::uint64_t>(index), 2));
    const Eigen::Index last = cov.matrix.rows() - 1;
    cov.matrix.row(last) *= std::sqrt(pe.variance_factor);
    cov.matrix.col(last) *= std::sqrt(pe.variance_factor);

    EstimateSnapshot current = EstimateSnapshot::from_variance(pe.value, cov.matrix(last, last), pe.n_enrolled,
                                                               pe.n_outcomes, t, spec.kind);
    double est = current.estimate, se = current.std_error, info = current.information;
    if (plan.orthogonalize) {
      std::vector<EstimateSnapshot> sequence;
      for (double e : stored.raw_estimates) {
        EstimateSnapshot prior;
        prior.estimate = e;
        sequence.push_back(prior);
      }
      sequence.push_back(current);
      const OrthogonalizedAnalysis a = orthogonalize_sequence(sequence, cov, theta0).analyses.back();
      if (sequence.size() > 1) {
        est = a.theta_tilde;
        se = a.std_error_tilde;
        info = a.info_tilde;
      }
    }

    SequentialBoundarySolver solver(config.design.spending);
    for (const auto& a : state.analyses_done) solver.add_analysis(a.fraction);
    AnalysisRecord rec;
    rec.index = index;
    rec.calendar_time = t;
    rec.n_enrolled = pe.n_enrolled;
    rec.n_outcomes = pe.n_outcomes;
    rec.information = info;
    rec.estimate = est;
    rec.std_error = se;
    rec.z = se > 0.0 ? (est - theta0) / se
                     : (est == theta0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), est - theta0));
    rec.fraction = index == K ? 1.0 : std::min(info / design.I_max, 1.0);
    rec.critical = solver.add_analysis(rec.fraction);
    rec.rejected = std::fabs(rec.z) >= rec.critical;
    state = record_analysis(std::move(state), rec);
    stored.raw_estimates.push_back(pe.value);

    json entry = to_json(rec);
    entry["raw_estimate"] = pe.value;
    entry["orthogonalized"] = plan.orthogonalize;
    entry["decision"] = "analysis " + std::to_string(index) + ": " + (rec.rejected ? "reject" : "continue");
    analyses.push_back(entry);
  }

  // Sample size re-projection from the final analysis' estimator.
  std::optional<long> projected;
  const auto final_snap = monitoring_estimate(data, t, plan.estimators.back(), plan.monitoring_variance,
                                              plan.bootstrap_replicates, stream_seed(seed, 0, 4), theta0);
  const long enrolled = static_cast<long>(data.count_enrolled(t));
  if (final_snap && std::isfinite(final_snap->information) && final_snap->information > 0.0) {
    projected = project_nmax(final_snap->n_outcomes, final_snap->information, design.I_max);
    state.projected_nmax = *projected;
    if (state.recruitment_open && *projected <= enrolled) state.recruitment_open = false;
  }

  std::string decision = "continue";
  if (!analyses.empty()) decision = analyses.back()["decision"].get<std::string>();
  if (state.verdict == Verdict::fail_to_reject) decision += " (final analysis: fail to reject)";

  json report = {{"config", to_json(config)},
                 {"calendar_time", t},
                 {"n_enrolled", enrolled},
                 {"n_outcomes", static_cast<long>(data.count_outcomes(t))},
                 {"resumed", resumed},
                 {"decision", decision},
                 {"analyses", analyses},
                 {"monitor_information", snap ? finite_or_string(snap->information) : json(nullptr)},
                 {"next_threshold", state.next_analysis < K ? json(state.thresholds[static_cast<std::size_t>(
                                                                  state.next_analysis)])
                                                            : json(nullptr)},
                 {"projected_nmax", projected ? json(*projected) : json(nullptr)},
                 {"recruitment_open", state.recruitment_open},
                 {"verdict", to_string(state.verdict)},
                 {"state", to_json(state)}};
  if (!config.monitor.state_path.empty()) {
    const std::filesystem::path path(config.monitor.state_path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_json_file(path, {{"state", to_json(state)}, {"raw_estimates", stored.raw_estimates}});
  }
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_json_file(std::filesystem::path(config.output_dir) / "monitor_report.json", report);
  }
  return report;
}

// ---- command line -----------------------------------------------------------

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Information-adaptive group sequential designs with covariate-adjusted estimators"};
  std::string command, config_path, out_dir;
  std::uint64_t seed = 0;
  int replicates = 0, threads = 0;
  app.add_option("command", command, "design, simulate or monitor (defaults to the config's command)")
      ->check(CLI::IsMember({"design", "simulate", "monitor"}));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  auto* rep_opt = app.add_option("--replicates", replicates, "Monte Carlo replicates")->check(CLI::PositiveNumber);
  auto* thr_opt = app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config", "cannot open '" + config_path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("(root)", "must be an object");
    if (!command.empty()) j["command"] = command;
    if (*out_opt) j["output_dir"] = out_dir;
    if (*seed_opt) {
      j["seed"] = seed;
      if (!j.contains("monitor") || j["monitor"].is_null()) j["monitor"] = json::object();
      j["monitor"]["seed"] = seed;
    }
    if (*rep_opt) j["replicates"] = replicates;
    if (*thr_opt) j["threads"] = threads;
    const RunConfig config = parse_run_config(j);

    json report;
    switch (config.command) {
      case Command::design: report = cmd_design(config); break;
      case Command::simulate: report = cmd_simulate(config); break;
      case Command::monitor: report = cmd_monitor(config); break;
    }
    if (config.command == Command::design && !config.output_dir.empty()) {
      std::filesystem::create_directories(config.output_dir);
      write_json_file(std::filesystem::path(config.output_dir) / "design.json", report);
    }
    out << report.dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace agsd
