#include "agsd/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "agsd/covariance.hpp"
#include "agsd/errors.hpp"
#include "agsd/numeric.hpp"
#include "agsd/orthogonalize.hpp"
#include "agsd/parallel.hpp"

namespace agsd {

std::string to_string(DgmKind kind) {
  switch (kind) {
    case DgmKind::dgm1_misspecified: return "dgm1_misspecified";
    case DgmKind::dgm2_misspecified: return "dgm2_misspecified";
    case DgmKind::prognostic_configurable: return "prognostic_configurable";
  }
  return "unknown";
}

DgmKind parse_dgm_kind(const std::string& name) {
  if (name == "dgm1_misspecified") return DgmKind::dgm1_misspecified;
  if (name == "dgm2_misspecified") return DgmKind::dgm2_misspecified;
  if (name == "prognostic_configurable") return DgmKind::prognostic_configurable;
  throw std::invalid_argument("unknown data-generating mechanism '" + name + "'");
}

std::string to_string(Effect effect) { return effect == Effect::null ? "null" : "alternative"; }

Effect parse_effect(const std::string& name) {
  if (name == "null") return Effect::null;
  if (name == "alternative") return Effect::alternative;
  throw std::invalid_argument("unknown effect '" + name + "'");
}

void DgmSpec::validate() const {
  if (!(recruitment_rate > 0.0) || !std::isfinite(recruitment_rate))
    throw ConfigError("dgm.recruitment_rate", "must be positive");
  if (!(outcome_delay >= 0.0) || !std::isfinite(outcome_delay))
    throw ConfigError("dgm.outcome_delay", "must be non-negative");
  switch (kind) {
    case DgmKind::dgm1_misspecified:
      if (effect == Effect::alternative)
        throw ConfigError("dgm.effect", "dgm1_misspecified only has a null version (both arm marginals 0.5)");
      break;
    case DgmKind::dgm2_misspecified:
      if (!(dgm2_null_retention > 0.0 && dgm2_null_retention <= 1.0))
        throw ConfigError("dgm.dgm2_null_retention", "must lie in (0, 1]");
      break;
    case DgmKind::prognostic_configurable: {
      const PrognosticParams& p = prognostic;
      if (p.num_covariates < 0) throw ConfigError("dgm.prognostic.num_covariates", "must be non-negative");
      if (!(p.correlation >= 0.0 && p.correlation < 1.0))
        throw ConfigError("dgm.prognostic.correlation", "must lie in [0, 1)");
      if (!std::isfinite(p.intercept)) throw ConfigError("dgm.prognostic.intercept", "must be finite");
      if (!p.coefficients.empty() && static_cast<int>(p.coefficients.size()) != p.num_covariates)
        throw ConfigError("dgm.prognostic.coefficients", "must have num_covariates entries");
      if (!std::isfinite(p.dial)) throw ConfigError("dgm.prognostic.dial", "must be finite");
      if (effect == Effect::alternative && p.arm_coefficient.has_value() == p.target_effect.has_value())
        throw ConfigError("dgm.prognostic", "the alternative needs exactly one of arm_coefficient, target_effect");
      if (p.target_effect && !(std::fabs(*p.target_effect) < 1.0))
        throw ConfigError("dgm.prognostic.target_effect", "must lie in (-1, 1)");
      for (std::size_t j = 0; j < p.visit_days.size(); ++j) {
        if (!(p.visit_days[j] > 0.0 && p.visit_days[j] <= outcome_delay))
          throw ConfigError("dgm.prognostic.visit_days", "must lie in (0, outcome_delay]");
        if (j > 0 && !(p.visit_days[j] > p.visit_days[j - 1]))
          throw ConfigError("dgm.prognostic.visit_days", "must be strictly increasing");
      }
      if (!(p.visit_noise >= 0.0)) throw ConfigError("dgm.prognostic.visit_noise", "must be non-negative");
      if (!(p.dropout_per_visit >= 0.0 && p.dropout_per_visit < 1.0))
        throw ConfigError("dgm.prognostic.dropout_per_visit", "must lie in [0, 1)");
      break;
    }
  }
}

std::array<double, 4> misspecify_covariates(const std::array<double, 4>& w) {
  const double third = w[0] * w[2] / 25.0 + 0.6;
  const double fourth = w[1] + w[3] + 20.0;
  return {std::exp(w[0] / 2.0), w[1] / (1.0 + std::exp(w[0])) + 10.0, third * third * third, fourth * fourth};
}

namespace {

constexpr std::array<double, 4> kDgm1Treated{-2.5, 2.0, -2.5, 2.1};
constexpr std::array<double, 4> kDgm1Control{-2.0, 2.5, -2.25, -2.1};

std::vector<double> prognostic_coefficients(const PrognosticParams& p) {
  if (!p.coefficients.empty()) return p.coefficients;
  return std::vector<double>(static_cast<std::size_t>(p.num_covariates), 1.0);
}

// E[g(mean + sd * Z)] for standard normal Z.
template <typename F>
double gaussian_expectation(F g, double mean, double sd) {
  if (sd == 0.0) return g(mean);
  auto integrand = [&](double z) { return g(mean + sd * z) * normal_pdf(z); };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-12);
}

// Standard deviation of dial * beta^T W under the equicorrelated covariance.
double prognostic_score_sd(const PrognosticParams& p) {
  const std::vector<double> beta = prognostic_coefficients(p);
  double sum = 0.0, sum_sq = 0.0;
  for (double b : beta) {
    sum += b;
    sum_sq += b * b;
  }
  const double var = (1.0 - p.correlation) * sum_sq + p.correlation * sum * sum;
  return std::fabs(p.dial) * std::sqrt(var);
}

double prognostic_marginal(const PrognosticParams& p, double arm_shift) {
  return gaussian_expectation([&](double s) { return expit(p.intercept + arm_shift + s); }, 0.0,
                              prognostic_score_sd(p));
}

TrialDataset empty_dataset(const DgmSpec& dgm) {
  switch (dgm.kind) {
    case DgmKind::dgm1_misspecified:
      return TrialDataset({"w1p", "w2p", "w3p", "w4p", "w1", "w2", "w3", "w4"}, OutcomeType::binary);
    case DgmKind::dgm2_misspecified:
      return TrialDataset({"w", "absw"}, OutcomeType::binary);
    case DgmKind::prognostic_configurable: {
      std::vector<std::string> names;
      for (int j = 1; j <= dgm.prognostic.num_covariates; ++j) names.push_back("w" + std::to_string(j));
      return TrialDataset(std::move(names), OutcomeType::binary, dgm.prognostic.visit_days);
    }
  }
  throw std::logic_error("unhandled data-generating mechanism");
}

}  // namespace

double prognostic_arm_coefficient(const DgmSpec& dgm) {
  const PrognosticParams& p = dgm.prognostic;
  if (dgm.effect == Effect::null) return 0.0;
  if (p.arm_coefficient) return *p.arm_coefficient;
  if (!p.target_effect) throw ConfigError("dgm.prognostic", "the alternative needs arm_coefficient or target_effect");
  const double control = prognostic_marginal(p, 0.0);
  const double target = *p.target_effect;
  auto gap = [&](double b) { return prognostic_marginal(p, b) - control - target; };
  const double lo = -40.0, hi = 40.0;
  if (gap(lo) > 0.0 || gap(hi) < 0.0)
    throw ConfigError("dgm.prognostic.target_effect", "not attainable from the control-arm risk");
  std::uintmax_t iterations = 200;
  const auto root = boost::math::tools::toms748_solve(gap, lo, hi, boost::math::tools::eps_tolerance<double>(50),
                                                      iterations);
  return 0.5 * (root.first + root.second);
}

std::array<double, 2> dgm_marginals(const DgmSpec& dgm) {
  dgm.validate();
  switch (dgm.kind) {
    case DgmKind::dgm1_misspecified: {
      // Each arm's linear predictor is a centred normal.
      auto sd = [](const std::array<double, 4>& b) {
        double s = 0.0;
        for (double x : b) s += x * x;
        return std::sqrt(s);
      };
      auto risk = [](double x) { return expit(x); };
      return {gaussian_expectation(risk, 0.0, sd(kDgm1Treated)), gaussian_expectation(risk, 0.0, sd(kDgm1Control))};
    }
    case DgmKind::dgm2_misspecified: {
      double treated = gaussian_expectation([](double w) { return expit(w * w - std::exp(w)); }, 1.0, 1.0);
      if (dgm.effect == Effect::null) treated *= dgm.dgm2_null_retention;
      const double control = gaussian_expectation([](double w) { return expit(-std::exp(w)); }, 1.0, 1.0);
      return {treated, control};
    }
    case DgmKind::prognostic_configurable: {
      const double shift = prognostic_arm_coefficient(dgm);
      return {prognostic_marginal(dgm.prognostic, shift), prognostic_marginal(dgm.prognostic, 0.0)};
    }
  }
  throw std::logic_error("unhandled data-generating mechanism");
}

TrialDataset generate(const DgmSpec& dgm, std::size_t n, std::uint64_t seed) {
  dgm.validate();
  if (n < 1) throw std::invalid_argument("generate needs n >= 1");
  TrialDataset data = empty_dataset(dgm);
  data.reserve(n);

  // One engine consumed in row order: a longer dataset from the same seed
  // repeats every row of a shorter one.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const PrognosticParams& prog = dgm.prognostic;
  const std::vector<double> beta = prognostic_coefficients(prog);
  const double arm_coef = dgm.kind == DgmKind::prognostic_configurable ? prognostic_arm_coefficient(dgm) : 0.0;
  const double shared_loading = std::sqrt(prog.correlation);
  const double own_loading = std::sqrt(1.0 - prog.correlation);

  SubjectRecord rec;
  for (std::size_t i = 0; i < n; ++i) {
    rec.id = static_cast<long>(i) + 1;
    rec.entry_time = static_cast<double>(i) / dgm.recruitment_rate;
    rec.outcome_delay = dgm.outcome_delay;
    rec.visits.clear();
    switch (dgm.kind) {
      case DgmKind::dgm1_misspecified: {
        std::array<double, 4> w;
        for (double& x : w) x = normal(rng);
        rec.arm = uniform(rng) < 0.5 ? 1 : 0;
        const auto& b = rec.arm == 1 ? kDgm1Treated : kDgm1Control;
        double eta = 0.0;
        for (int j = 0; j < 4; ++j) eta += b[j] * w[j];
        rec.outcome = uniform(rng) < expit(eta) ? 1.0 : 0.0;
        const auto seen = misspecify_covariates(w);
        rec.covariates = {seen[0], seen[1], seen[2], seen[3], w[0], w[1], w[2], w[3]};
        break;
      }
      case DgmKind::dgm2_misspecified: {
        const double w = 1.0 + normal(rng);
        rec.arm = uniform(rng) < 0.5 ? 1 : 0;
        const double p = rec.arm == 1 ? expit(w * w - std::exp(w)) : expit(-std::exp(w));
        double y = uniform(rng) < p ? 1.0 : 0.0;
        const double keep = uniform(rng);  // always drawn so the stream does not depend on the effect
        if (dgm.effect == Effect::null && rec.arm == 1 && y == 1.0) y = keep < dgm.dgm2_null_retention ? 1.0 : 0.0;
        rec.outcome = y;
        rec.covariates = {w, std::fabs(w)};
        break;
      }
      case DgmKind::prognostic_configurable: {
        const double shared = normal(rng);
        rec.covariates.resize(static_cast<std::size_t>(prog.num_covariates));
        double score = 0.0;
        for (std::size_t j = 0; j < rec.covariates.size(); ++j) {
          rec.covariates[j] = shared_loading * shared + own_loading * normal(rng);
          score += beta[j] * rec.covariates[j];
        }
        rec.arm = uniform(rng) < 0.5 ? 1 : 0;
        const double eta = prog.intercept + arm_coef * rec.arm + prog.dial * score;
        rec.outcome = uniform(rng) < expit(eta) ? 1.0 : 0.0;
        bool dropped = false;
        for (std::size_t j = 0; j < prog.visit_days.size(); ++j) {
          const double value = eta + prog.visit_noise * normal(rng);
          if (!dropped && uniform(rng) < prog.dropout_per_visit) dropped = true;
          rec.visits.push_back({static_cast<int>(j) + 1, dropped ? 0.0 : value, !dropped});
        }
        if (dropped) rec.outcome = std::numeric_limits<double>::quiet_NaN();
        break;
      }
    }
    data.add(rec);
  }
  return data;
}

// ---- trial simulation -------------------------------------------------------

namespace {

bool all_unadjusted(std::span<const EstimatorSpec> specs) {
  return std::all_of(specs.begin(), specs.end(),
                     [](const EstimatorSpec& e) { return e.kind == EstimatorKind::unadjusted; });
}

}  // namespace

void AnalysisPlan::validate(int K) const {
  if (static_cast<int>(estimators.size()) != K)
    throw ConfigError("plan.estimators", "must have one entry per analysis (K = " + std::to_string(K) + ")");
  const bool any_tmle = std::any_of(estimators.begin(), estimators.end(),
                                    [](const EstimatorSpec& e) { return e.kind == EstimatorKind::tmle; });
  auto check_method = [&](VarianceMethod m, const std::string& path) {
    if (m == VarianceMethod::closed_form && !all_unadjusted(estimators))
      throw ConfigError(path, "closed_form is only available for the unadjusted estimator");
    if (m == VarianceMethod::influence && any_tmle)
      throw ConfigError(path, "influence is not available for the TMLE estimator");
  };
  check_method(monitoring_variance, "plan.monitoring_variance");
  check_method(analysis_variance, "plan.analysis_variance");
  if (bootstrap_replicates < 2) throw ConfigError("plan.bootstrap_replicates", "must be at least 2");
  if (!(pool_factor >= 1.0)) throw ConfigError("plan.pool_factor", "must be at least 1");
}

DesignContext prepare_design(const DesignSpec& design) {
  const DesignSummary summary = summarize_design(design);
  if (!summary.nmax)
    throw ConfigError("design.control_probability",
                      "simulation needs an initial n_max: set control_probability, outcome_sd or initial_nmax");
  DesignContext ctx;
  ctx.design = design;
  ctx.I_max = summary.I_max;
  ctx.thresholds = summary.thresholds;
  ctx.nmax0 = *summary.nmax;
  return ctx;
}

std::optional<EstimateSnapshot> monitoring_estimate(const TrialDataset& data, double t, const EstimatorSpec& spec,
                                                    VarianceMethod method, int bootstrap_replicates,
                                                    std::uint64_t seed, double /*theta0*/, WarmStart* warm) {
  if (method == VarianceMethod::automatic) {
    switch (spec.kind) {
      case EstimatorKind::unadjusted: method = VarianceMethod::closed_form; break;
      case EstimatorKind::standardization: method = VarianceMethod::influence; break;
      case EstimatorKind::tmle: method = VarianceMethod::bootstrap; break;
    }
  }
  EstimateSnapshot snap;
  try {
    switch (method) {
      case VarianceMethod::closed_form:
        if (spec.kind != EstimatorKind::unadjusted)
          throw std::invalid_argument("closed-form variance is only available for the unadjusted estimator");
        snap = unadjusted_estimate(data, t);
        break;
      case VarianceMethod::influence: {
        PointEstimate pe;
        WarmStart fitted;
        const WarmStart* start = warm && warm->arm_coef[0].size() > 0 ? warm : nullptr;
        const Eigen::VectorXd phi = influence_contributions(data, t, spec, start, &pe, &fitted);
        if (warm && spec.kind == EstimatorKind::standardization) *warm = std::move(fitted);
        const double var = influence_covariance(phi, 1).matrix(0, 0) * pe.variance_factor;
        snap = EstimateSnapshot::from_variance(pe.value, var, pe.n_enrolled, pe.n_outcomes, t, spec.kind);
        snap.separation = pe.separation;
        break;
      }
      default: {
        VarianceOptions vo;
        vo.method = VarianceMethod::bootstrap;
        vo.bootstrap_replicates = bootstrap_replicates;
        vo.seed = seed;
        snap = estimate(data, t, spec, vo);
        break;
      }
    }
  } catch (const EstimatorFailure&) {
    return std::nullopt;
  }
  if (snap.separation || !std::isfinite(snap.estimate)) return std::nullopt;
  // A zero variance means every observed outcome in each arm agrees, which is too little data to
  // judge information; wait for the next look.
  if (!(snap.std_error > 0.0) || !std::isfinite(snap.information)) return std::nullopt;
  return snap;
}

CovarianceEstimate analysis_covariance(const TrialDataset& data, std::span<const double> times,
                                       std::span<const EstimatorSpec> specs, VarianceMethod method,
                                       int bootstrap_replicates, std::uint64_t seed) {
  if (times.size() != specs.size())
    throw ShapeMismatch("analysis covariance: " + std::to_string(times.size()) + " times but " +
                        std::to_string(specs.size()) + " estimators");
  if (method == VarianceMethod::automatic)
    method = all_unadjusted(specs) ? VarianceMethod::influence : VarianceMethod::bootstrap;
  // The closed-form unadjusted variance is the influence-function variance.
  if (method == VarianceMethod::closed_form) {
    if (!all_unadjusted(specs))
      throw std::invalid_argument("closed-form covariance is only available for the unadjusted estimator");
    method = VarianceMethod::influence;
  }
  if (method == VarianceMethod::influence) {
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j)
      phi.col(static_cast<Eigen::Index>(j)) = influence_contributions(data, times[j], specs[j]);
    return influence_covariance(phi, times.size());
  }
  BootstrapOptions bo;
  bo.replicates = bootstrap_replicates;
  bo.seed = seed;
  return bootstrap_covariance(data, times, specs, bo);
}

namespace {

// Re-projections may not grow n_max beyond this multiple of the initial value.
constexpr long kNmaxGrowthCap = 10;

struct Track {
  MonitorState state;
  SequentialBoundarySolver solver;
};

class TrialSimulator {
 public:
  TrialSimulator(const DgmSpec& dgm, const DesignContext& ctx, const AnalysisPlan& plan, std::uint64_t seed)
      : dgm_(dgm), ctx_(ctx), plan_(plan), seed_(seed), data_seed_(stream_seed(seed, 0, 1)),
        K_(ctx.design.K), warm_(static_cast<std::size_t>(ctx.design.K)) {
    nmax_ = ctx.nmax0;
    const auto pool_size = static_cast<std::size_t>(std::ceil(plan.pool_factor * static_cast<double>(nmax_)));
    pool_ = generate(dgm, std::max<std::size_t>(pool_size, static_cast<std::size_t>(nmax_)), data_seed_);
    index_outcomes();
    tracks_.push_back({make_monitor_state(ctx.thresholds, nmax_), SequentialBoundarySolver(ctx.design.spending)});
    if (plan.orthogonalize)
      tracks_.push_back({make_monitor_state(ctx.thresholds, nmax_), SequentialBoundarySolver(ctx.design.spending)});
    record_.seed = seed;
    record_.initial_nmax = nmax_;
    record_.final_nmax = nmax_;
  }

  TrialRecord run() {
    const DesignSpec& design = ctx_.design;
    long last_check = 0;
    long last_projection = K_ == 1 ? 0 : -1;  // -1: re-projection not started yet
    double t = 0.0;
    for (;;) {
      const std::size_t possible = reachable_outcomes();
      const long target = last_check + design.monitoring_cadence;
      long n_obs;
      if (target <= static_cast<long>(possible)) {
        n_obs = target;
        t = pool_.availability_time(outcome_rows_[static_cast<std::size_t>(target) - 1]);
      } else {
        n_obs = static_cast<long>(possible);
        if (possible > 0) t = std::max(t, pool_.availability_time(outcome_rows_[possible - 1]));
        // Trailing drop-outs: move on until the last planned subject has entered.
        if (open_) t = std::max(t, pool_.entry_time(static_cast<std::size_t>(nmax_) - 1));
      }
      if (open_ && enrolled_by(t) >= static_cast<std::size_t>(nmax_)) close_recruitment(static_cast<std::size_t>(nmax_));

      monitor_at(t, n_obs, last_projection);
      if (all_terminal()) break;

      if (last_projection >= 0 && n_obs - last_projection >= design.nmax_update_cadence) {
        reproject(t);
        last_projection = n_obs;
      }
      last_check = n_obs;
      if (!open_ && n_obs >= static_cast<long>(reachable_outcomes())) {
        // Every enrolled outcome is in and information still falls short.
        record_.plateau = true;
        for (auto& track : tracks_)
          if (!track.state.terminal()) track.state = monitor_force_final(std::move(track.state)).state;
        conduct(K_, t, true, std::numeric_limits<double>::quiet_NaN());
        break;
      }
    }
    record_.enrolled_total = static_cast<long>(open_ ? enrolled_by(t) : pool_.size());
    record_.raw = {tracks_[0].state, tracks_[0].state.analyses_done};
    if (plan_.orthogonalize) record_.orthogonalized = SequenceResult{tracks_[1].state, tracks_[1].state.analyses_done};
    return std::move(record_);
  }

 private:
  void index_outcomes() {
    outcome_rows_.clear();
    for (std::size_t i = 0; i < pool_.size(); ++i)
      if (!std::isnan(pool_.outcome(i))) outcome_rows_.push_back(i);
  }

  // Outcomes that will ever be observed given the current recruitment target.
  std::size_t reachable_outcomes() const {
    const std::size_t limit = open_ ? static_cast<std::size_t>(nmax_) : pool_.size();
    return static_cast<std::size_t>(std::lower_bound(outcome_rows_.begin(), outcome_rows_.end(), limit) -
                                    outcome_rows_.begin());
  }

  std::size_t enrolled_by(double t) const {
    std::size_t lo = 0, hi = pool_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (pool_.entry_time(mid) <= t) lo = mid + 1;
      else hi = mid;
    }
    return lo;
  }

  void ensure_pool(std::size_t n) {
    if (pool_.size() >= n) return;
    pool_ = generate(dgm_, std::max(n, 2 * pool_.size()), data_seed_);
    index_outcomes();
  }

  void close_recruitment(std::size_t n) {
    open_ = false;
    pool_ = pool_.head(n);
    index_outcomes();
    for (auto& track : tracks_) track.state.recruitment_open = false;
  }

  bool all_terminal() const {
    return std::all_of(tracks_.begin(), tracks_.end(), [](const Track& tr) { return tr.state.terminal(); });
  }

  Track* lead() {
    for (auto& track : tracks_)
      if (!track.state.terminal()) return &track;
    return nullptr;
  }

  std::optional<EstimateSnapshot> monitoring_snapshot(double t, int analysis) {
    const TrialDataset data = pool_.head(enrolled_by(t));
    return monitoring_estimate(data, t, plan_.estimators[static_cast<std::size_t>(analysis)], plan_.monitoring_variance,
                               plan_.bootstrap_replicates, stream_seed(seed_, static_cast<std::uint64_t>(++monitor_draws_), 3),
                               ctx_.design.theta0, &warm_[static_cast<std::size_t>(analysis)]);
  }

  void monitor_at(double t, long n_obs, long& last_projection) {
    for (;;) {
      Track* first = lead();
      if (!first) return;
      const int next = first->state.next_analysis;
      const auto snap = monitoring_snapshot(t, next);
      if (!snap) return;
      bool fired = false;
      for (auto& track : tracks_) {
        if (track.state.terminal()) continue;
        MonitorResult r = monitor_step(std::move(track.state), *snap);
        track.state = std::move(r.state);
        fired = r.decision.kind == MonitorDecision::Kind::trigger;
      }
      if (!fired) return;
      conduct(next + 1, t, false, snap->information);
      if (next + 1 < K_ && !all_terminal()) {
        reproject(t);
        last_projection = n_obs;
      }
    }
  }

  void reproject(double t) {
    if (!open_) return;
    const auto snap = monitoring_snapshot(t, K_ - 1);
    if (!snap || !std::isfinite(snap->information) || !(snap->information > 0.0)) return;
    long projected = project_nmax(snap->n_outcomes, snap->information, ctx_.I_max);
    projected = std::min(projected, kNmaxGrowthCap * ctx_.nmax0);
    record_.final_nmax = projected;
    for (auto& track : tracks_) track.state.projected_nmax = projected;
    const std::size_t enrolled = enrolled_by(t);
    if (projected <= static_cast<long>(enrolled)) {
      close_recruitment(enrolled);
    } else {
      nmax_ = projected;
      ensure_pool(static_cast<std::size_t>(nmax_));
    }
  }

  void conduct(int index, double t, bool forced, double monitor_information) {
    const EstimatorSpec& spec = plan_.estimators[static_cast<std::size_t>(index) - 1];
    const TrialDataset data = pool_.head(enrolled_by(t));
    WarmStart& warm = warm_[static_cast<std::size_t>(index) - 1];
    WarmStart fitted;
    const PointEstimate pe = point_estimate(data, t, spec, warm.arm_coef[0].size() > 0 ? &warm : nullptr, &fitted);
    if (spec.kind == EstimatorKind::standardization) warm = std::move(fitted);

    times_.push_back(t);
    specs_.push_back(spec);
    factors_.push_back(pe.variance_factor);

    CovarianceEstimate cov;
    if (plan_.orthogonalize) {
      cov = analysis_covariance(data, times_, specs_, plan_.analysis_variance, plan_.bootstrap_replicates,
                                analysis_seed(index));
    } else {
      const double one_time[1] = {t};
      cov = analysis_covariance(data, one_time, std::span<const EstimatorSpec>(&spec, 1), plan_.analysis_variance,
                                plan_.bootstrap_replicates, analysis_seed(index));
      factors_ = {pe.variance_factor};
    }
    // Small-sample factors scale each estimator's variance.
    for (Eigen::Index j = 0; j < cov.matrix.rows(); ++j) {
      const double s = std::sqrt(factors_[static_cast<std::size_t>(j)]);
      cov.matrix.row(j) *= s;
      cov.matrix.col(j) *= s;
    }
    if (!plan_.orthogonalize) factors_.clear();

    const Eigen::Index last = cov.matrix.rows() - 1;
    EstimateSnapshot snap = EstimateSnapshot::from_variance(pe.value, cov.matrix(last, last), pe.n_enrolled,
                                                            pe.n_outcomes, t, spec.kind);
    snap.separation = pe.separation;
    snapshots_.push_back(snap);

    record_.timings.push_back({index, t, pe.n_enrolled, pe.n_outcomes, monitor_information, pe.value, forced});

    const double theta0 = ctx_.design.theta0;
    auto decide = [&](Track& track, double est, double se, double info) {
      if (track.state.terminal() || track.state.next_analysis != index) return;
      const double fraction = index == K_ ? 1.0 : std::min(info / ctx_.I_max, 1.0);
      AnalysisRecord rec;
      rec.index = index;
      rec.calendar_time = t;
      rec.n_enrolled = pe.n_enrolled;
      rec.n_outcomes = pe.n_outcomes;
      rec.information = info;
      rec.estimate = est;
      rec.std_error = se;
      rec.z = z_statistic(est - theta0, se);
      rec.fraction = fraction;
      rec.critical = track.solver.add_analysis(fraction);
      rec.rejected = std::fabs(rec.z) >= rec.critical;
      rec.forced = forced;
      track.state = record_analysis(std::move(track.state), rec);
    };

    decide(tracks_[0], snap.estimate, snap.std_error, snap.information);
    if (plan_.orthogonalize) {
      const OrthogonalizedSequence seq = orthogonalize_sequence(snapshots_, cov, theta0);
      const OrthogonalizedAnalysis& a = seq.analyses.back();
      decide(tracks_[1], a.theta_tilde, a.std_error_tilde, a.info_tilde);
    }
  }

  std::uint64_t analysis_seed(int index) const { return stream_seed(seed_, static_cast<std::uint64_t>(index), 2); }

  static double z_statistic(double diff, double se) {
    if (se > 0.0) return diff / se;
    if (diff == 0.0) return 0.0;
    return diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }

  const DgmSpec& dgm_;
  const DesignContext& ctx_;
  const AnalysisPlan& plan_;
  std::uint64_t seed_;
  std::uint64_t data_seed_;
  int K_;

  TrialDataset pool_;
  std::vector<std::size_t> outcome_rows_;
  bool open_ = true;
  long nmax_ = 0;
  long monitor_draws_ = 0;

  std::vector<Track> tracks_;  // raw first, orthogonalized second when requested
  std::vector<WarmStart> warm_;
  std::vector<double> times_;
  std::vector<EstimatorSpec> specs_;
  std::vector<double> factors_;
  std::vector<EstimateSnapshot> snapshots_;
  TrialRecord record_;
};

}  // namespace

TrialRecord simulate_trial(const DgmSpec& dgm, const DesignContext& design, const AnalysisPlan& plan,
                           std::uint64_t seed) {
  plan.validate(design.design.K);
  TrialSimulator sim(dgm, design, plan, seed);
  return sim.run();
}

// ---- Monte Carlo ------------------------------------------------------------

McResult aggregate_sequence(const std::vector<TrialRecord>& records, bool orthogonalized, int K) {
  McResult m;
  m.replicates = static_cast<long>(records.size());
  const auto k = static_cast<std::size_t>(K);
  m.asn_per_analysis.assign(k, 0.0);
  m.aat_per_analysis.assign(k, 0.0);
  m.reached_per_analysis.assign(k, 0);
  m.rejections_per_analysis.assign(k, 0);
  long finite_information = 0;
  for (const auto& rec : records) {
    if (orthogonalized && !rec.orthogonalized) throw std::invalid_argument("record has no orthogonalized sequence");
    const SequenceResult& s = orthogonalized ? *rec.orthogonalized : rec.raw;
    if (s.analyses.empty()) throw std::invalid_argument("sequence without analyses");
    const AnalysisRecord& d = s.decision();
    if (s.rejected()) {
      ++m.rejections;
      ++m.rejections_per_analysis[static_cast<std::size_t>(d.index) - 1];
    }
    m.asn += static_cast<double>(d.n_enrolled);
    m.aat += d.calendar_time;
    // A degenerate final look can carry a zero variance; leave it out of the average information.
    if (std::isfinite(d.information)) {
      m.ai += d.information;
      ++finite_information;
    }
    for (const auto& a : s.analyses) {
      const auto j = static_cast<std::size_t>(a.index) - 1;
      ++m.reached_per_analysis[j];
      m.asn_per_analysis[j] += static_cast<double>(a.n_enrolled);
      m.aat_per_analysis[j] += a.calendar_time;
    }
  }
  if (m.replicates > 0) {
    const double r = static_cast<double>(m.replicates);
    m.rejection_rate = static_cast<double>(m.rejections) / r;
    m.mc_std_error = std::sqrt(m.rejection_rate * (1.0 - m.rejection_rate) / r);
    m.asn /= r;
    m.aat /= r;
    m.ai = finite_information > 0 ? m.ai / static_cast<double>(finite_information) : 0.0;
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (m.reached_per_analysis[j] == 0) continue;
    m.asn_per_analysis[j] /= static_cast<double>(m.reached_per_analysis[j]);
    m.aat_per_analysis[j] /= static_cast<double>(m.reached_per_analysis[j]);
  }
  return m;
}

McSummary monte_carlo(const DgmSpec& dgm, const DesignSpec& design, const AnalysisPlan& plan,
                      const McOptions& options) {
  if (options.replicates < 1) throw std::invalid_argument("monte_carlo needs at least one replicate");
  dgm.validate();
  const DesignContext ctx = prepare_design(design);
  plan.validate(design.K);

  const auto R = static_cast<std::size_t>(options.replicates);
  std::vector<std::optional<TrialRecord>> out(R);
  std::vector<std::string> errors(R);
  parallel_for_index(options.replicates, options.threads, [&](int r) {
    try {
      TrialRecord rec = simulate_trial(dgm, ctx, plan, stream_seed(options.seed, static_cast<std::uint64_t>(r)));
      rec.replicate = r;
      out[static_cast<std::size_t>(r)] = std::move(rec);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(r)] = "replicate " + std::to_string(r) + ": " + e.what();
    }
  });

  McSummary summary;
  for (std::size_t r = 0; r < R; ++r) {
    if (out[r]) summary.records.push_back(std::move(*out[r]));
    else summary.failures.push_back(errors[r]);
  }
  summary.failed = static_cast<long>(summary.failures.size());
  if (summary.failed * 1000 > options.replicates)
    throw FailedReplicates(std::to_string(summary.failed) + " of " + std::to_string(options.replicates) +
                               " replicates failed; first: " + summary.failures.front(),
                           summary.failed);

  summary.raw = aggregate_sequence(summary.records, false, design.K);
  if (plan.orthogonalize) summary.orthogonalized = aggregate_sequence(summary.records, true, design.K);
  for (const auto& rec : summary.records) {
    if (rec.plateau) ++summary.plateau;
    if (rec.orthogonalized) {
      const bool a = rec.raw.rejected(), b = rec.orthogonalized->rejected();
      if (a && !b) ++summary.raw_only;
      if (b && !a) ++summary.orthogonalized_only;
    }
  }
  if (!options.keep_records) summary.records.clear();
  return summary;
}

}  // namespace agsd

namespace agsd {

double increment_correlation(const std::vector<TrialRecord>& records, int k, bool orthogonalized) {
  if (k < 2) throw std::invalid_argument("increment correlation needs k >= 2");
  std::vector<double> last, increment;
  for (const auto& rec : records) {
    std::optional<double> first, current;
    if (orthogonalized) {
      if (!rec.orthogonalized) continue;
      for (const auto& a : rec.orthogonalized->analyses) {
        if (a.index == 1) first = a.estimate;
        if (a.index == k) current = a.estimate;
      }
    } else {
      for (const auto& a : rec.timings) {
        if (a.index == 1) first = a.estimate;
        if (a.index == k) current = a.estimate;
      }
    }
    if (!first || !current) continue;
    last.push_back(*current);
    increment.push_back(*current - *first);
  }
  const std::size_t n = last.size();
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::Map<const Eigen::VectorXd> x(last.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::VectorXd> y(increment.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  return xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
}

}  // namespace agsd
