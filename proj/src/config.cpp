#include "agsd/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "agsd/errors.hpp"

namespace agsd {

using nlohmann::json;

std::string to_string(Command command) {
  switch (command) {
    case Command::design: return "design";
    case Command::simulate: return "simulate";
    case Command::monitor: return "monitor";
  }
  return "unknown";
}

Command parse_command(const std::string& name) {
  if (name == "design") return Command::design;
  if (name == "simulate") return Command::simulate;
  if (name == "monitor") return Command::monitor;
  throw std::invalid_argument("unknown command '" + name + "' (expected design, simulate or monitor)");
}

namespace {

// JSON has no infinities: they travel as the strings "inf" / "-inf", NaN as null.
json real(double x) {
  if (std::isnan(x)) return nullptr;
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double read_real(const json& j, const std::string& path) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path, "must be a number");
}

// Typed access to one JSON object, remembering where it sits in the file.
class Section {
 public:
  Section(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (j_.is_null()) j_ = json::object();
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "(root)" : path_, "must be an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& item : j_.items())
      if (!known.count(item.key())) throw ConfigError(at(item.key()), "unknown key");
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    if (!raw(key).is_number()) throw ConfigError(at(key), "must be a number");
    return raw(key).get<double>();
  }

  std::optional<double> optional_number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key, 0.0);
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (v.is_number_integer()) return v.get<long>();
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<long>(v.get<double>());
    throw ConfigError(at(key), "must be an integer");
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long>() >= 0) return static_cast<std::uint64_t>(v.get<long>());
    throw ConfigError(at(key), "must be a non-negative integer");
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!raw(key).is_boolean()) throw ConfigError(at(key), "must be true or false");
    return raw(key).get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!raw(key).is_string()) throw ConfigError(at(key), "must be a string");
    return raw(key).get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(at(key), "must be an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "must be a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(at(key), "must be an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "must be a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  Section child(const std::string& key) const { return Section(has(key) ? raw(key) : json::object(), at(key)); }

  // Parses an enumerated string field with one of the module parsers.
  template <typename Parse>
  auto choice(const std::string& key, const std::string& fallback, Parse parse) const {
    const std::string s = string(key, fallback);
    try {
      return parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(at(key), e.what());
    }
  }

 private:
  json j_;
  std::string path_;
};

SpendingFunction parse_spending(const Section& s, double alpha) {
  s.allow({"family", "alpha", "rho"});
  SpendingFunction f;
  f.family = s.choice("family", "pocock_approx", parse_spending_family);
  f.alpha = s.number("alpha", alpha);
  f.rho = s.number("rho", 1.0);
  return f;
}

DesignSpec parse_design(const Section& s) {
  s.allow({"alpha", "beta", "theta0", "thetaA", "K", "fractions", "spending", "monitoring_cadence",
           "nmax_update_cadence", "control_probability", "outcome_sd", "initial_nmax"});
  DesignSpec d;
  d.alpha = s.number("alpha", d.alpha);
  d.beta = s.number("beta", d.beta);
  d.theta0 = s.number("theta0", d.theta0);
  if (!s.has("thetaA")) throw ConfigError(s.at("thetaA"), "is required");
  d.thetaA = s.number("thetaA", 0.0);
  d.fractions = s.numbers("fractions", {1.0});
  d.K = static_cast<int>(s.integer("K", static_cast<long>(d.fractions.size())));
  d.spending = parse_spending(s.child("spending"), d.alpha);
  d.monitoring_cadence = static_cast<int>(s.integer("monitoring_cadence", d.monitoring_cadence));
  d.nmax_update_cadence = static_cast<int>(s.integer("nmax_update_cadence", d.nmax_update_cadence));
  d.control_probability = s.optional_number("control_probability");
  d.outcome_sd = s.optional_number("outcome_sd");
  if (s.has("initial_nmax")) d.initial_nmax = s.integer("initial_nmax", 0);
  d.validate();
  return d;
}

TmleSpec parse_tmle(const Section& s) {
  s.allow({"covariates", "include_history", "imputation", "weight_cap"});
  TmleSpec t;
  t.covariates = s.strings("covariates", {});
  t.include_history = s.boolean("include_history", t.include_history);
  t.imputation = s.choice("imputation", "locf", [](const std::string& v) {
    if (v == "locf") return ImputationRule::locf;
    if (v == "none") return ImputationRule::none;
    throw std::invalid_argument("unknown imputation rule '" + v + "' (expected locf or none)");
  });
  t.weight_cap = s.number("weight_cap", t.weight_cap);
  if (!(t.weight_cap > 0.0)) throw ConfigError(s.at("weight_cap"), "must be positive");
  return t;
}

EstimatorSpec parse_estimator(const Section& s) {
  s.allow({"kind", "covariates", "include_pipeline", "correction", "tmle"});
  EstimatorSpec e;
  e.kind = s.choice("kind", "unadjusted", parse_estimator_kind);
  e.covariates = s.strings("covariates", {});
  e.include_pipeline = s.boolean("include_pipeline", e.include_pipeline);
  e.correction = s.choice("correction", "none", [](const std::string& v) {
    if (v == "none") return SmallSampleCorrection::none;
    if (v == "enabled") return SmallSampleCorrection::enabled;
    throw std::invalid_argument("unknown correction '" + v + "' (expected none or enabled)");
  });
  e.tmle = parse_tmle(s.child("tmle"));
  return e;
}

AnalysisPlan parse_plan(const Section& s, int K) {
  s.allow({"estimators", "orthogonalize", "monitoring_variance", "analysis_variance", "bootstrap_replicates",
           "pool_factor"});
  AnalysisPlan p;
  const std::string path = s.at("estimators");
  if (!s.has("estimators")) {
    p.estimators.assign(static_cast<std::size_t>(K), EstimatorSpec{});
  } else if (s.raw("estimators").is_object()) {
    // One estimator for every analysis.
    p.estimators.assign(static_cast<std::size_t>(K), parse_estimator(Section(s.raw("estimators"), path)));
  } else if (s.raw("estimators").is_array()) {
    const json& arr = s.raw("estimators");
    for (std::size_t k = 0; k < arr.size(); ++k)
      p.estimators.push_back(parse_estimator(Section(arr[k], path + "[" + std::to_string(k) + "]")));
  } else {
    throw ConfigError(path, "must be an object or an array of objects");
  }
  p.orthogonalize = s.boolean("orthogonalize", p.orthogonalize);
  p.monitoring_variance = s.choice("monitoring_variance", "automatic", parse_variance_method);
  p.analysis_variance = s.choice("analysis_variance", "automatic", parse_variance_method);
  p.bootstrap_replicates = static_cast<int>(s.integer("bootstrap_replicates", p.bootstrap_replicates));
  p.pool_factor = s.number("pool_factor", p.pool_factor);
  p.validate(K);
  return p;
}

PrognosticParams parse_prognostic(const Section& s) {
  s.allow({"num_covariates", "correlation", "intercept", "coefficients", "dial", "arm_coefficient", "target_effect",
           "visit_days", "visit_noise", "dropout_per_visit"});
  PrognosticParams p;
  p.num_covariates = static_cast<int>(s.integer("num_covariates", p.num_covariates));
  p.correlation = s.number("correlation", p.correlation);
  p.intercept = s.number("intercept", p.intercept);
  p.coefficients = s.numbers("coefficients", {});
  p.dial = s.number("dial", p.dial);
  p.arm_coefficient = s.optional_number("arm_coefficient");
  p.target_effect = s.optional_number("target_effect");
  p.visit_days = s.numbers("visit_days", {});
  p.visit_noise = s.number("visit_noise", p.visit_noise);
  p.dropout_per_visit = s.number("dropout_per_visit", p.dropout_per_visit);
  return p;
}

DgmSpec parse_dgm(const Section& s) {
  s.allow({"kind", "effect", "recruitment_rate", "outcome_delay", "dgm2_null_retention", "prognostic"});
  DgmSpec g;
  g.kind = s.choice("kind", "dgm1_misspecified", parse_dgm_kind);
  g.effect = s.choice("effect", "null", parse_effect);
  g.recruitment_rate = s.number("recruitment_rate", g.recruitment_rate);
  g.outcome_delay = s.number("outcome_delay", g.outcome_delay);
  g.dgm2_null_retention = s.number("dgm2_null_retention", g.dgm2_null_retention);
  g.prognostic = parse_prognostic(s.child("prognostic"));
  g.validate();
  return g;
}

MonitorInputs parse_monitor(const Section& s) {
  s.allow({"data", "state", "calendar_time", "visit_days", "seed"});
  MonitorInputs m;
  m.data_path = s.string("data", "");
  m.state_path = s.string("state", "");
  m.calendar_time = s.optional_number("calendar_time");
  m.visit_days = s.numbers("visit_days", {});
  m.seed = s.unsigned_integer("seed", m.seed);
  return m;
}

json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

}  // namespace

RunConfig parse_run_config(const json& j) {
  const Section root(j, "");
  root.allow({"command", "seed", "replicates", "threads", "design", "dgm", "plan", "monitor", "output_dir"});
  RunConfig c;
  c.command = root.choice("command", "design", parse_command);
  c.mc.seed = root.unsigned_integer("seed", c.mc.seed);
  c.mc.replicates = static_cast<int>(root.integer("replicates", c.mc.replicates));
  if (c.mc.replicates < 1) throw ConfigError("replicates", "must be at least 1");
  c.mc.threads = static_cast<int>(root.integer("threads", c.mc.threads));
  if (c.mc.threads < 1) throw ConfigError("threads", "must be at least 1");
  c.output_dir = root.string("output_dir", "");
  c.design = parse_design(root.child("design"));
  if (c.command == Command::simulate || root.has("dgm")) c.dgm = parse_dgm(root.child("dgm"));
  c.plan = parse_plan(root.child("plan"), c.design.K);
  c.monitor = parse_monitor(root.child("monitor"));
  if (c.command == Command::monitor && c.monitor.data_path.empty())
    throw ConfigError("monitor.data", "is required for the monitor command");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON in '") + path + "': " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const DesignSpec& d) {
  return {{"alpha", d.alpha},
          {"beta", d.beta},
          {"theta0", d.theta0},
          {"thetaA", d.thetaA},
          {"K", d.K},
          {"fractions", d.fractions},
          {"spending", {{"family", to_string(d.spending.family)}, {"alpha", d.spending.alpha}, {"rho", d.spending.rho}}},
          {"monitoring_cadence", d.monitoring_cadence},
          {"nmax_update_cadence", d.nmax_update_cadence},
          {"control_probability", optional_json(d.control_probability)},
          {"outcome_sd", optional_json(d.outcome_sd)},
          {"initial_nmax", d.initial_nmax ? json(*d.initial_nmax) : json(nullptr)}};
}

json to_json(const EstimatorSpec& e) {
  return {{"kind", to_string(e.kind)},
          {"covariates", e.covariates},
          {"include_pipeline", e.include_pipeline},
          {"correction", e.correction == SmallSampleCorrection::enabled ? "enabled" : "none"},
          {"tmle",
           {{"covariates", e.tmle.covariates},
            {"include_history", e.tmle.include_history},
            {"imputation", e.tmle.imputation == ImputationRule::locf ? "locf" : "none"},
            {"weight_cap", e.tmle.weight_cap}}}};
}

json to_json(const AnalysisPlan& p) {
  json estimators = json::array();
  for (const auto& e : p.estimators) estimators.push_back(to_json(e));
  return {{"estimators", estimators},
          {"orthogonalize", p.orthogonalize},
          {"monitoring_variance", to_string(p.monitoring_variance)},
          {"analysis_variance", to_string(p.analysis_variance)},
          {"bootstrap_replicates", p.bootstrap_replicates},
          {"pool_factor", p.pool_factor}};
}

json to_json(const DgmSpec& g) {
  const PrognosticParams& p = g.prognostic;
  return {{"kind", to_string(g.kind)},
          {"effect", to_string(g.effect)},
          {"recruitment_rate", g.recruitment_rate},
          {"outcome_delay", g.outcome_delay},
          {"dgm2_null_retention", g.dgm2_null_retention},
          {"prognostic",
           {{"num_covariates", p.num_covariates},
            {"correlation", p.correlation},
            {"intercept", p.intercept},
            {"coefficients", p.coefficients},
            {"dial", p.dial},
            {"arm_coefficient", optional_json(p.arm_coefficient)},
            {"target_effect", optional_json(p.target_effect)},
            {"visit_days", p.visit_days},
            {"visit_noise", p.visit_noise},
            {"dropout_per_visit", p.dropout_per_visit}}}};
}

json to_json(const RunConfig& c) {
  json j = {{"command", to_string(c.command)},
            {"seed", c.mc.seed},
            {"replicates", c.mc.replicates},
            {"threads", c.mc.threads},
            {"output_dir", c.output_dir},
            {"design", to_json(c.design)},
            {"plan", to_json(c.plan)}};
  if (c.command == Command::simulate) j["dgm"] = to_json(c.dgm);
  if (c.command == Command::monitor) {
    j["monitor"] = {{"data", c.monitor.data_path},
                    {"state", c.monitor.state_path},
                    {"calendar_time", optional_json(c.monitor.calendar_time)},
                    {"visit_days", c.monitor.visit_days},
                    {"seed", c.monitor.seed}};
  }
  return j;
}

json to_json(const AnalysisRecord& r) {
  return {{"index", r.index},
          {"calendar_time", real(r.calendar_time)},
          {"n_enrolled", r.n_enrolled},
          {"n_outcomes", r.n_outcomes},
          {"information", real(r.information)},
          {"estimate", real(r.estimate)},
          {"std_error", real(r.std_error)},
          {"z", real(r.z)},
          {"fraction", real(r.fraction)},
          {"critical", real(r.critical)},
          {"rejected", r.rejected},
          {"forced", r.forced}};
}

json to_json(const MonitorState& s) {
  json done = json::array();
  for (const auto& r : s.analyses_done) done.push_back(to_json(r));
  return {{"thresholds", s.thresholds},
          {"next_analysis", s.next_analysis},
          {"analyses_done", done},
          {"recruitment_open", s.recruitment_open},
          {"projected_nmax", s.projected_nmax},
          {"verdict", to_string(s.verdict)}};
}

MonitorState monitor_state_from_json(const json& j) {
  const Section s(j, "state");
  MonitorState m;
  m.thresholds = s.numbers("thresholds", {});
  m.next_analysis = static_cast<int>(s.integer("next_analysis", 0));
  m.recruitment_open = s.boolean("recruitment_open", true);
  m.projected_nmax = s.integer("projected_nmax", 0);
  m.verdict = s.choice("verdict", "running", parse_verdict);
  if (s.has("analyses_done")) {
    const json& arr = s.raw("analyses_done");
    if (!arr.is_array()) throw ConfigError("state.analyses_done", "must be an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string path = "state.analyses_done[" + std::to_string(k) + "]";
      const Section a(arr[k], path);
      auto num = [&](const char* key) { return a.has(key) ? read_real(a.raw(key), a.at(key)) : 0.0; };
      AnalysisRecord r;
      r.index = static_cast<int>(a.integer("index", 0));
      r.calendar_time = num("calendar_time");
      r.n_enrolled = a.integer("n_enrolled", 0);
      r.n_outcomes = a.integer("n_outcomes", 0);
      r.information = num("information");
      r.estimate = num("estimate");
      r.std_error = num("std_error");
      r.z = num("z");
      r.fraction = num("fraction");
      r.critical = num("critical");
      r.rejected = a.boolean("rejected", false);
      r.forced = a.boolean("forced", false);
      m.analyses_done.push_back(r);
    }
  }
  if (static_cast<int>(m.analyses_done.size()) != m.next_analysis)
    throw ConfigError("state.next_analysis", "does not match the number of recorded analyses");
  return m;
}

json to_json(const McResult& r) {
  return {{"rejections", r.rejections},
          {"replicates", r.replicates},
          {"rejection_rate", r.rejection_rate},
          {"mc_std_error", r.mc_std_error},
          {"asn", r.asn},
          {"aat", r.aat},
          {"ai", real(r.ai)},
          {"asn_per_analysis", r.asn_per_analysis},
          {"aat_per_analysis", r.aat_per_analysis},
          {"reached_per_analysis", r.reached_per_analysis},
          {"rejections_per_analysis", r.rejections_per_analysis}};
}

}  // namespace agsd
