#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agsd/covariance.hpp"
#include "agsd/dataset.hpp"
#include "agsd/design.hpp"
#include "agsd/estimators.hpp"

namespace agsd {

// ---- data-generating mechanisms ---------------------------------------------

enum class DgmKind { dgm1_misspecified, dgm2_misspecified, prognostic_configurable };
enum class Effect { null, alternative };

std::string to_string(DgmKind kind);
DgmKind parse_dgm_kind(const std::string& name);
std::string to_string(Effect effect);
Effect parse_effect(const std::string& name);

// Y ~ Bernoulli(expit(intercept + arm_coefficient * A + dial * coefficients^T W))
// with W ~ N(0, Sigma), Sigma having unit variances and common correlation.
struct PrognosticParams {
  int num_covariates = 1;
  double correlation = 0.0;
  double intercept = -1.0986122886681098;  // logit(0.25)
  std::vector<double> coefficients;        // defaults to all ones
  double dial = 1.0;
  // Under the alternative: either a fixed arm coefficient, or the marginal
  // risk difference it should produce (calibrated numerically).
  std::optional<double> arm_coefficient;
  std::optional<double> target_effect;
  // Optional intermediate visits: value = linear predictor + N(0, visit_noise^2);
  // each visit is missed with probability dropout_per_visit, and a missed
  // visit means drop-out (later visits and the primary outcome are missing).
  std::vector<double> visit_days;
  double visit_noise = 1.0;
  double dropout_per_visit = 0.0;
};

struct DgmSpec {
  DgmKind kind = DgmKind::dgm1_misspecified;
  Effect effect = Effect::null;
  double recruitment_rate = 5.0;  // subjects per day, uniform spacing 1/rate
  double outcome_delay = 365.0;
  double dgm2_null_retention = 0.6588;
  PrognosticParams prognostic;

  void validate() const;  // throws ConfigError naming the field
};

// Analyst-visible covariate transform of the latent DGM1 covariates.
std::array<double, 4> misspecify_covariates(const std::array<double, 4>& w);

// Subjects in entry order. Rows depend only on (dgm, seed, row index), so a
// larger n extends a smaller one without changing the shared prefix.
TrialDataset generate(const DgmSpec& dgm, std::size_t n, std::uint64_t seed);

// Arm coefficient actually used by the prognostic mechanism.
double prognostic_arm_coefficient(const DgmSpec& dgm);

// Population P(Y=1 | A=1) and P(Y=1 | A=0), by numerical integration.
std::array<double, 2> dgm_marginals(const DgmSpec& dgm);

// ---- trial simulation -------------------------------------------------------

struct AnalysisPlan {
  std::vector<EstimatorSpec> estimators;  // one per analysis; the last one also drives n_max
  bool orthogonalize = false;
  // Standard errors used to monitor information between analyses and to
  // re-project n_max. `automatic`: closed form (unadjusted), influence
  // function (standardization), bootstrap (TMLE).
  VarianceMethod monitoring_variance = VarianceMethod::automatic;
  // Standard errors and joint covariance at analyses. `automatic`: influence
  // function when every estimator is unadjusted, bootstrap otherwise.
  VarianceMethod analysis_variance = VarianceMethod::automatic;
  int bootstrap_replicates = 200;
  // Subjects generated up front, as a multiple of the initial n_max; the pool
  // is extended on demand if a re-projection asks for more.
  double pool_factor = 2.0;

  void validate(int K) const;
};

// Estimate used to watch information between analyses. `automatic` resolves
// as described in AnalysisPlan. Empty when the data cannot support the
// estimator yet: a failed fit, separation, or a zero variance at theta0 (no
// events in either arm, for instance). `warm`, when given, supplies and
// receives working-model starting values.
std::optional<EstimateSnapshot> monitoring_estimate(const TrialDataset& data, double t, const EstimatorSpec& spec,
                                                    VarianceMethod method, int bootstrap_replicates,
                                                    std::uint64_t seed, double theta0, WarmStart* warm = nullptr);

// Joint covariance of specs[j] evaluated at times[j], used at analyses.
// `automatic` resolves as described in AnalysisPlan.
CovarianceEstimate analysis_covariance(const TrialDataset& data, std::span<const double> times,
                                       std::span<const EstimatorSpec> specs, VarianceMethod method,
                                       int bootstrap_replicates, std::uint64_t seed);

struct AnalysisTiming {
  int index = 0;  // 1-based
  double calendar_time = 0.0;
  long n_enrolled = 0;
  long n_outcomes = 0;
  double monitor_information = 0.0;
  double estimate = 0.0;  // raw estimate of this analysis' estimator
  bool forced = false;    // plateau rule
};

struct SequenceResult {
  MonitorState state;
  std::vector<AnalysisRecord> analyses;  // analyses this sequence took part in
  bool rejected() const { return state.verdict == Verdict::reject; }
  const AnalysisRecord& decision() const { return analyses.back(); }
};

struct TrialRecord {
  long replicate = -1;  // index within a Monte Carlo run
  std::uint64_t seed = 0;
  std::vector<AnalysisTiming> timings;
  SequenceResult raw;
  std::optional<SequenceResult> orthogonalized;
  bool plateau = false;
  long initial_nmax = 0;
  long final_nmax = 0;
  long enrolled_total = 0;
};

struct DesignContext {
  DesignSpec design;
  double I_max = 0.0;
  std::vector<double> thresholds;
  long nmax0 = 0;
};

DesignContext prepare_design(const DesignSpec& design);

TrialRecord simulate_trial(const DgmSpec& dgm, const DesignContext& design, const AnalysisPlan& plan,
                           std::uint64_t seed);

// ---- Monte Carlo ------------------------------------------------------------

struct McResult {
  long rejections = 0;
  long replicates = 0;
  double rejection_rate = 0.0;
  double mc_std_error = 0.0;
  double asn = 0.0;  // enrolled at decision
  double aat = 0.0;  // calendar time of decision
  double ai = 0.0;   // information at decision
  std::vector<double> asn_per_analysis;
  std::vector<double> aat_per_analysis;
  std::vector<long> reached_per_analysis;
  std::vector<long> rejections_per_analysis;
};

struct McSummary {
  McResult raw;
  std::optional<McResult> orthogonalized;
  long failed = 0;
  long plateau = 0;
  // Paired comparison: replicates rejected by raw only, by the orthogonalized
  // sequence only.
  long raw_only = 0;
  long orthogonalized_only = 0;
  std::vector<TrialRecord> records;  // successful replicates, in index order
  std::vector<std::string> failures;
};

struct McOptions {
  int replicates = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool keep_records = true;
};

McSummary monte_carlo(const DgmSpec& dgm, const DesignSpec& design, const AnalysisPlan& plan, const McOptions& options);

McResult aggregate_sequence(const std::vector<TrialRecord>& records, bool orthogonalized, int K);

// Across replicates that conducted analyses 1 and k (k >= 2): the sample
// correlation of theta_k with theta_k - theta_1. Raw estimates come from the
// analysis timings, orthogonalized ones from that sequence's records. NaN
// with fewer than three such replicates.
double increment_correlation(const std::vector<TrialRecord>& records, int k, bool orthogonalized);

}  // namespace agsd
