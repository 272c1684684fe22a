#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agsd/dataset.hpp"
#include "agsd/glm.hpp"

namespace agsd {

enum class EstimatorKind { unadjusted, standardization, tmle };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(const std::string& name);

// One estimator evaluation at one calendar time.
struct EstimateSnapshot {
  double estimate = 0.0;
  double std_error = 0.0;
  double information = 0.0;  // std_error^-2; +inf when the variance estimate is zero
  long n_enrolled = 0;
  long n_outcomes = 0;
  double calendar_time = 0.0;
  EstimatorKind estimator_kind = EstimatorKind::unadjusted;
  bool separation = false;  // a logistic fit hit the separation bound

  static EstimateSnapshot from_variance(double estimate, double variance, long n_enrolled,
                                        long n_outcomes, double calendar_time, EstimatorKind kind);
};

// ---- estimator configuration ----------------------------------------------

enum class ImputationRule { locf, none };

struct TmleSpec {
  std::vector<std::string> covariates;  // baseline columns used by every working model
  bool include_history = true;          // add earlier visit values to the censoring and outcome models
  ImputationRule imputation = ImputationRule::locf;
  double weight_cap = 50.0;
};

enum class SmallSampleCorrection { none, enabled };

// How the standard error of a snapshot is obtained. `automatic` means the
// closed form for the unadjusted estimator and the bootstrap otherwise.
enum class VarianceMethod { automatic, closed_form, bootstrap, influence };

std::string to_string(VarianceMethod method);
VarianceMethod parse_variance_method(const std::string& name);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::unadjusted;
  std::vector<std::string> covariates;  // standardization working-model columns
  bool include_pipeline = true;         // standardization: predict over enrolled rather than observed
  TmleSpec tmle;
  SmallSampleCorrection correction = SmallSampleCorrection::none;
};

struct VarianceOptions {
  VarianceMethod method = VarianceMethod::automatic;
  int bootstrap_replicates = 1000;
  std::uint64_t seed = 1;
  int retry_cap = 10;
  int threads = 1;
};

// ---- point estimation -------------------------------------------------------

// Coefficients of the per-arm working models, reused as Newton starting
// values when the same estimator is refit on similar data (bootstrap
// resamples, successive monitoring checks).
struct WarmStart {
  Eigen::VectorXd arm_coef[2];
};

struct PointEstimate {
  double value = 0.0;
  bool separation = false;
  long n_enrolled = 0;
  long n_outcomes = 0;
  // Multiplier for the variance estimate; 1 unless a small-sample correction applies.
  double variance_factor = 1.0;
};

PointEstimate point_estimate(const TrialDataset& data, double t, const EstimatorSpec& spec,
                             const WarmStart* warm = nullptr, WarmStart* fitted = nullptr);

// Full snapshot: point estimate plus standard error by the requested method.
EstimateSnapshot estimate(const TrialDataset& data, double t, const EstimatorSpec& spec,
                          const VarianceOptions& variance = {});

EstimateSnapshot unadjusted_estimate(const TrialDataset& data, double t);

EstimateSnapshot standardization_estimate(const TrialDataset& data, double t, bool include_pipeline,
                                          const std::vector<std::string>& covariates,
                                          const VarianceOptions& variance = {});

EstimateSnapshot tmle_estimate(const TrialDataset& data, double t, const TmleSpec& spec,
                               const VarianceOptions& variance = {});

// ---- standardization internals (shared with the influence-function code) ---

struct StandardizationFit {
  GlmFit arm_fit[2];
  double arm_mean[2] = {0.0, 0.0};
  double estimate = 0.0;
  std::vector<std::size_t> covariate_columns;
  bool logistic = true;
  long n_outcomes_arm[2] = {0, 0};
  long n_enrolled = 0;
  long n_prediction = 0;
};

// Design matrix of the selected covariate columns for the given rows.
Eigen::MatrixXd covariate_matrix(const TrialDataset& data, const std::vector<std::size_t>& rows,
                                 const std::vector<std::size_t>& columns);

StandardizationFit fit_standardization(const TrialDataset& data, double t,
                                       const std::vector<std::size_t>& covariate_columns,
                                       bool include_pipeline, const WarmStart* warm = nullptr);

// ---- TMLE internals ---------------------------------------------------------

struct TmleFit {
  double estimate = 0.0;
  std::vector<std::size_t> rows;          // enrolled subjects, dataset order
  Eigen::VectorXd propensity;             // pi^A: probability of the received arm
  Eigen::MatrixXd uncensored_probability; // pi^R_j, columns j = 1..J+1 (NaN where not at risk)
  Eigen::MatrixXd weights;                // N_j, columns j = 1..J+1 (NaN where not at risk)
  long outcome_model_n = 0;
  long outcome_model_p = 0;
  bool separation = false;
};

TmleFit fit_tmle(const TrialDataset& data, double t, const TmleSpec& spec);

// ---- small-sample correction -----------------------------------------------

double small_sample_correction_two_arm(long n0, long n1, long p0, long p1);
double small_sample_correction_pooled(long n, long p);

}  // namespace agsd
