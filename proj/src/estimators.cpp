#include "agsd/estimators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "agsd/covariance.hpp"
#include "agsd/errors.hpp"

namespace agsd {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::unadjusted: return "unadjusted";
    case EstimatorKind::standardization: return "standardization";
    case EstimatorKind::tmle: return "tmle";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(const std::string& name) {
  if (name == "unadjusted") return EstimatorKind::unadjusted;
  if (name == "standardization") return EstimatorKind::standardization;
  if (name == "tmle") return EstimatorKind::tmle;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

std::string to_string(VarianceMethod method) {
  switch (method) {
    case VarianceMethod::automatic: return "automatic";
    case VarianceMethod::closed_form: return "closed_form";
    case VarianceMethod::bootstrap: return "bootstrap";
    case VarianceMethod::influence: return "influence";
  }
  return "unknown";
}

VarianceMethod parse_variance_method(const std::string& name) {
  if (name == "automatic") return VarianceMethod::automatic;
  if (name == "closed_form") return VarianceMethod::closed_form;
  if (name == "bootstrap") return VarianceMethod::bootstrap;
  if (name == "influence") return VarianceMethod::influence;
  throw std::invalid_argument("unknown variance method '" + name + "'");
}

EstimateSnapshot EstimateSnapshot::from_variance(double estimate, double variance, long n_enrolled,
                                                 long n_outcomes, double calendar_time,
                                                 EstimatorKind kind) {
  if (!(variance >= 0.0)) throw EstimatorFailure("variance estimate is negative or NaN");
  EstimateSnapshot s;
  s.estimate = estimate;
  s.std_error = std::sqrt(variance);
  s.information = variance > 0.0 ? 1.0 / variance : std::numeric_limits<double>::infinity();
  s.n_enrolled = n_enrolled;
  s.n_outcomes = n_outcomes;
  s.calendar_time = calendar_time;
  s.estimator_kind = kind;
  return s;
}

namespace {

std::vector<std::size_t> resolve_columns(const TrialDataset& data, const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  cols.reserve(names.size());
  for (const auto& name : names) cols.push_back(data.covariate_index(name));
  return cols;
}

struct ArmSums {
  long n[2] = {0, 0};
  double sum[2] = {0.0, 0.0};
  double sumsq[2] = {0.0, 0.0};
  long enrolled = 0;
};

ArmSums arm_sums(const TrialDataset& data, double t) {
  ArmSums s;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.enrolled(i, t)) continue;
    ++s.enrolled;
    if (!data.outcome_observed(i, t)) continue;
    const int a = data.arm(i);
    const double y = data.outcome(i);
    ++s.n[a];
    s.sum[a] += y;
    s.sumsq[a] += y * y;
  }
  return s;
}

void require_arm_outcomes(const long n[2], double t) {
  for (int a = 0; a < 2; ++a) {
    if (n[a] < 2)
      throw EmptyArm("arm " + std::to_string(a) + " has " + std::to_string(n[a]) +
                     " observed outcomes at t=" + std::to_string(t) + " (need at least 2)");
  }
}

}  // namespace

// ---- unadjusted -------------------------------------------------------------

EstimateSnapshot unadjusted_estimate(const TrialDataset& data, double t) {
  const ArmSums s = arm_sums(data, t);
  require_arm_outcomes(s.n, t);
  double mean[2], var[2];
  for (int a = 0; a < 2; ++a) {
    mean[a] = s.sum[a] / s.n[a];
    if (data.outcome_type() == OutcomeType::binary) {
      var[a] = mean[a] * (1.0 - mean[a]) / s.n[a];
    } else {
      const double ss = s.sumsq[a] - s.n[a] * mean[a] * mean[a];
      var[a] = std::max(ss, 0.0) / (s.n[a] - 1) / s.n[a];
    }
  }
  return EstimateSnapshot::from_variance(mean[1] - mean[0], var[0] + var[1], s.enrolled,
                                         s.n[0] + s.n[1], t, EstimatorKind::unadjusted);
}

// ---- standardization --------------------------------------------------------

Eigen::MatrixXd covariate_matrix(const TrialDataset& data, const std::vector<std::size_t>& rows,
                                 const std::vector<std::size_t>& columns) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c) X(r, c) = data.covariate(rows[r], columns[c]);
  return X;
}

StandardizationFit fit_standardization(const TrialDataset& data, double t,
                                       const std::vector<std::size_t>& covariate_columns,
                                       bool include_pipeline, const WarmStart* warm) {
  StandardizationFit fit;
  fit.covariate_columns = covariate_columns;
  fit.logistic = data.outcome_type() == OutcomeType::binary;

  std::vector<std::size_t> arm_rows[2];
  std::vector<std::size_t> prediction_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.enrolled(i, t)) continue;
    ++fit.n_enrolled;
    const bool observed = data.outcome_observed(i, t);
    if (observed) arm_rows[data.arm(i)].push_back(i);
    if (observed || include_pipeline) prediction_rows.push_back(i);
  }
  for (int a = 0; a < 2; ++a) fit.n_outcomes_arm[a] = static_cast<long>(arm_rows[a].size());
  require_arm_outcomes(fit.n_outcomes_arm, t);
  fit.n_prediction = static_cast<long>(prediction_rows.size());

  const Eigen::MatrixXd Xp = covariate_matrix(data, prediction_rows, covariate_columns);
  for (int a = 0; a < 2; ++a) {
    const Eigen::MatrixXd X = covariate_matrix(data, arm_rows[a], covariate_columns);
    Eigen::VectorXd y(X.rows());
    for (std::size_t r = 0; r < arm_rows[a].size(); ++r) y(r) = data.outcome(arm_rows[a][r]);
    if (fit.logistic) {
      const Eigen::VectorXd* start = nullptr;
      if (warm && warm->arm_coef[a].size() == X.cols() + 1) start = &warm->arm_coef[a];
      fit.arm_fit[a] = fit_logistic(X, y, {}, {}, start);
    } else {
      fit.arm_fit[a] = fit_linear(X, y);
    }
    fit.arm_mean[a] = fit.arm_fit[a].predict(Xp, fit.logistic).mean();
  }
  fit.estimate = fit.arm_mean[1] - fit.arm_mean[0];
  return fit;
}

EstimateSnapshot standardization_estimate(const TrialDataset& data, double t, bool include_pipeline,
                                          const std::vector<std::string>& covariates,
                                          const VarianceOptions& variance) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::standardization;
  spec.covariates = covariates;
  spec.include_pipeline = include_pipeline;
  return estimate(data, t, spec, variance);
}

// ---- TMLE -------------------------------------------------------------------

TmleFit fit_tmle(const TrialDataset& data, double t, const TmleSpec& spec) {
  const std::vector<std::size_t> wcols = resolve_columns(data, spec.covariates);
  const bool binary = data.outcome_type() == OutcomeType::binary;
  const std::size_t J = data.num_visits();
  const std::size_t stages = J + 1;  // intermediate visits plus the primary outcome

  TmleFit fit;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.enrolled(i, t)) fit.rows.push_back(i);
  const std::size_t n = fit.rows.size();

  // Visit values and observation flags; column J is the primary outcome.
  Eigen::MatrixXd value = Eigen::MatrixXd::Zero(n, stages);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen(n, stages);
  long finals[2] = {0, 0};
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = fit.rows[r];
    for (std::size_t j = 0; j < J; ++j) {
      seen(r, j) = data.visit_observed(i, j, t);
      if (seen(r, j)) value(r, j) = data.visit_value(i, j);
    }
    seen(r, J) = data.outcome_observed(i, t);
    if (seen(r, J)) {
      value(r, J) = data.outcome(i);
      ++finals[data.arm(i)];
    }
  }
  require_arm_outcomes(finals, t);

  // Intermittent missing values: a visit that is unobserved although a later
  // one is observed. Carried forward from the previous visit, or from the
  // observed arm mean when the first visit is the one missing.
  double first_visit_mean[2] = {0.0, 0.0};
  if (J > 0) {
    double sum[2] = {0.0, 0.0};
    long cnt[2] = {0, 0};
    for (std::size_t r = 0; r < n; ++r) {
      if (!seen(r, 0)) continue;
      const int a = data.arm(fit.rows[r]);
      sum[a] += value(r, 0);
      ++cnt[a];
    }
    for (int a = 0; a < 2; ++a) first_visit_mean[a] = cnt[a] > 0 ? sum[a] / cnt[a] : 0.0;
  }
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t last = stages;
    for (std::size_t j = stages; j-- > 0;) {
      if (seen(r, j)) {
        last = j;
        break;
      }
    }
    if (last == stages) continue;
    for (std::size_t j = 0; j < last; ++j) {
      if (seen(r, j)) continue;
      if (spec.imputation == ImputationRule::none)
        throw NonMonotoneMissingness("subject " + std::to_string(data.id(fit.rows[r])) +
                                     ": visit " + std::to_string(j + 1) +
                                     " missing before an observed later visit");
      value(r, j) = j == 0 ? first_visit_mean[data.arm(fit.rows[r])] : value(r, j - 1);
      seen(r, j) = true;
    }
  }

  // History H_j = (W, A, Y_1..Y_{j-1}) for stage index j in 1..J+1.
  auto history = [&](const std::vector<std::size_t>& local_rows, std::size_t j, int arm_override) {
    const std::size_t prior = spec.include_history ? j - 1 : 0;
    Eigen::MatrixXd H(static_cast<Eigen::Index>(local_rows.size()),
                      static_cast<Eigen::Index>(wcols.size() + 1 + prior));
    for (std::size_t k = 0; k < local_rows.size(); ++k) {
      const std::size_t r = local_rows[k];
      const std::size_t i = fit.rows[r];
      Eigen::Index c = 0;
      for (std::size_t w : wcols) H(k, c++) = data.covariate(i, w);
      H(k, c++) = arm_override >= 0 ? arm_override : data.arm(i);
      for (std::size_t v = 0; v < prior; ++v) H(k, c++) = value(r, v);
    }
    return H;
  };

  std::vector<std::size_t> all(n);
  for (std::size_t r = 0; r < n; ++r) all[r] = r;

  // Treatment propensity.
  {
    const Eigen::MatrixXd W = covariate_matrix(data, fit.rows, wcols);
    Eigen::VectorXd a(n);
    for (std::size_t r = 0; r < n; ++r) a(r) = data.arm(fit.rows[r]);
    const GlmFit ps = fit_logistic(W, a);
    fit.separation |= ps.separated;
    const Eigen::VectorXd psi = ps.predict(W, true);
    fit.propensity.resize(n);
    for (std::size_t r = 0; r < n; ++r) fit.propensity(r) = a(r) == 1.0 ? psi(r) : 1.0 - psi(r);
  }

  // Censoring models and cumulative weights.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  fit.uncensored_probability = Eigen::MatrixXd::Constant(n, stages, nan);
  fit.weights = Eigen::MatrixXd::Constant(n, stages, nan);
  Eigen::VectorXd running = fit.propensity.cwiseInverse();
  for (std::size_t j = 1; j <= stages; ++j) {
    std::vector<std::size_t> at_risk;
    for (std::size_t r = 0; r < n; ++r)
      if (j == 1 || seen(r, j - 2)) at_risk.push_back(r);
    if (at_risk.empty()) break;
    const Eigen::MatrixXd H = history(at_risk, j, -1);
    Eigen::VectorXd y(H.rows());
    for (std::size_t k = 0; k < at_risk.size(); ++k) y(k) = seen(at_risk[k], j - 1) ? 1.0 : 0.0;
    const GlmFit cm = fit_logistic(H, y);
    fit.separation |= cm.separated;
    const Eigen::VectorXd p = cm.predict(H, true);
    for (std::size_t k = 0; k < at_risk.size(); ++k) {
      const std::size_t r = at_risk[k];
      fit.uncensored_probability(r, j - 1) = p(k);
      running(r) /= p(k);
      fit.weights(r, j - 1) = running(r);
      if (seen(r, j - 1) && running(r) > spec.weight_cap)
        throw WeightOverflow("subject " + std::to_string(data.id(fit.rows[r])) + ": weight " +
                             std::to_string(running(r)) + " at visit " + std::to_string(j) +
                             " exceeds cap " + std::to_string(spec.weight_cap));
    }
  }

  // Backward sequence of weighted outcome regressions.
  Eigen::VectorXd Q = value.col(J);
  for (std::size_t j = J + 1; j-- > 0;) {
    // Model M_{j+1}: Q_{j+1} ~ H_{j+1} among R_{j+1} = 1, weights N_{j+1}.
    std::vector<std::size_t> fit_rows;
    for (std::size_t r = 0; r < n; ++r)
      if (seen(r, j)) fit_rows.push_back(r);
    const Eigen::MatrixXd H = history(fit_rows, j + 1, -1);
    Eigen::VectorXd y(H.rows()), w(H.rows());
    for (std::size_t k = 0; k < fit_rows.size(); ++k) {
      y(k) = Q(fit_rows[k]);
      w(k) = fit.weights(fit_rows[k], j);
    }
    const GlmFit m = binary ? fit_logistic(H, y, w) : fit_linear(H, y, w);
    fit.separation |= m.separated;
    if (j == J) {
      fit.outcome_model_n = static_cast<long>(fit_rows.size());
      fit.outcome_model_p = static_cast<long>(H.cols());
    }
    if (j > 0) {
      std::vector<std::size_t> next_rows;
      for (std::size_t r = 0; r < n; ++r)
        if (seen(r, j - 1)) next_rows.push_back(r);
      const Eigen::VectorXd pred = m.predict(history(next_rows, j + 1, -1), binary);
      Q.setConstant(nan);
      for (std::size_t k = 0; k < next_rows.size(); ++k) Q(next_rows[k]) = pred(k);
    } else {
      const Eigen::VectorXd q1 = m.predict(history(all, 1, 1), binary);
      const Eigen::VectorXd q0 = m.predict(history(all, 1, 0), binary);
      fit.estimate = (q1 - q0).mean();
    }
  }
  return fit;
}

EstimateSnapshot tmle_estimate(const TrialDataset& data, double t, const TmleSpec& spec,
                               const VarianceOptions& variance) {
  EstimatorSpec es;
  es.kind = EstimatorKind::tmle;
  es.tmle = spec;
  return estimate(data, t, es, variance);
}

// ---- dispatch ---------------------------------------------------------------

PointEstimate point_estimate(const TrialDataset& data, double t, const EstimatorSpec& spec,
                             const WarmStart* warm, WarmStart* fitted) {
  PointEstimate pe;
  switch (spec.kind) {
    case EstimatorKind::unadjusted: {
      const ArmSums s = arm_sums(data, t);
      require_arm_outcomes(s.n, t);
      pe.value = s.sum[1] / s.n[1] - s.sum[0] / s.n[0];
      pe.n_enrolled = s.enrolled;
      pe.n_outcomes = s.n[0] + s.n[1];
      break;
    }
    case EstimatorKind::standardization: {
      const auto cols = resolve_columns(data, spec.covariates);
      const StandardizationFit f = fit_standardization(data, t, cols, spec.include_pipeline, warm);
      pe.value = f.estimate;
      pe.separation = f.arm_fit[0].separated || f.arm_fit[1].separated;
      pe.n_enrolled = f.n_enrolled;
      pe.n_outcomes = f.n_outcomes_arm[0] + f.n_outcomes_arm[1];
      if (spec.correction == SmallSampleCorrection::enabled) {
        const long p = static_cast<long>(cols.size());
        pe.variance_factor = small_sample_correction_two_arm(f.n_outcomes_arm[0], f.n_outcomes_arm[1], p, p);
      }
      if (fitted) {
        fitted->arm_coef[0] = f.arm_fit[0].coef;
        fitted->arm_coef[1] = f.arm_fit[1].coef;
      }
      break;
    }
    case EstimatorKind::tmle: {
      const TmleFit f = fit_tmle(data, t, spec.tmle);
      pe.value = f.estimate;
      pe.separation = f.separation;
      pe.n_enrolled = static_cast<long>(f.rows.size());
      pe.n_outcomes = static_cast<long>(data.count_outcomes(t));
      if (spec.correction == SmallSampleCorrection::enabled)
        pe.variance_factor = small_sample_correction_pooled(f.outcome_model_n, f.outcome_model_p);
      break;
    }
  }
  return pe;
}

EstimateSnapshot estimate(const TrialDataset& data, double t, const EstimatorSpec& spec,
                          const VarianceOptions& variance) {
  VarianceMethod method = variance.method;
  if (method == VarianceMethod::automatic)
    method = spec.kind == EstimatorKind::unadjusted ? VarianceMethod::closed_form : VarianceMethod::bootstrap;

  PointEstimate pe;
  double var = 0.0;
  switch (method) {
    case VarianceMethod::closed_form: {
      if (spec.kind != EstimatorKind::unadjusted)
        throw std::invalid_argument("closed-form variance is only available for the unadjusted estimator");
      pe = point_estimate(data, t, spec);
      var = unadjusted_estimate(data, t).std_error;
      var *= var;
      break;
    }
    case VarianceMethod::influence: {
      const Eigen::VectorXd phi = influence_contributions(data, t, spec, nullptr, &pe);
      var = influence_covariance(phi, 1).matrix(0, 0);
      break;
    }
    case VarianceMethod::bootstrap: {
      pe = point_estimate(data, t, spec);
      BootstrapOptions bo;
      bo.replicates = variance.bootstrap_replicates;
      bo.seed = variance.seed;
      bo.retry_cap = variance.retry_cap;
      bo.threads = variance.threads;
      const double times[1] = {t};
      const EstimatorSpec plan[1] = {spec};
      var = bootstrap_covariance(data, times, plan, bo).matrix(0, 0);
      break;
    }
    case VarianceMethod::automatic: break;
  }
  EstimateSnapshot s = EstimateSnapshot::from_variance(pe.value, var * pe.variance_factor, pe.n_enrolled,
                                                       pe.n_outcomes, t, spec.kind);
  s.separation = pe.separation;
  return s;
}

// ---- small-sample correction -----------------------------------------------

double small_sample_correction_two_arm(long n0, long n1, long p0, long p1) {
  const long d0 = n0 - p0 - 1, d1 = n1 - p1 - 1;
  if (d0 <= 0 || d1 <= 0 || n0 <= 1 || n1 <= 1)
    throw DegenerateSampleSize("two-arm correction needs n_a > p_a + 1 in both arms");
  const double num = 1.0 / d0 + 1.0 / d1;
  const double den = 1.0 / (n0 - 1) + 1.0 / (n1 - 1);
  return num / den;
}

double small_sample_correction_pooled(long n, long p) {
  if (n - p - 1 <= 0 || n <= 1) throw DegenerateSampleSize("pooled correction needs n > p + 1");
  return static_cast<double>(n - 1) / static_cast<double>(n - p - 1);
}

}  // namespace agsd
