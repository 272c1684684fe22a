#include "agsd/covariance.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include "agsd/errors.hpp"
#include "agsd/numeric.hpp"
#include "agsd/parallel.hpp"

namespace agsd {

bool check_covariance(const CovarianceEstimate& cov, std::string* reason) {
  auto fail = [&](const std::string& why) {
    if (reason) *reason = why;
    return false;
  };
  const Eigen::MatrixXd& m = cov.matrix;
  if (m.rows() != m.cols()) return fail("matrix is not square");
  if (!m.allFinite()) return fail("matrix has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return fail("matrix is not symmetric");
  if (m.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * scale) return fail("matrix has a negative eigenvalue");
  }
  for (Eigen::Index k = 0; k < m.rows(); ++k)
    if (!(m(k, k) > 0.0)) return fail("diagonal entry " + std::to_string(k) + " is not positive");
  return true;
}

namespace {

Eigen::MatrixXd centered_crossprod(const Eigen::MatrixXd& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - mean;
  return centered.transpose() * centered;
}

}  // namespace

Eigen::MatrixXd bootstrap_estimates(const TrialDataset& data, std::span<const double> times,
                                    std::span<const EstimatorSpec> plan, const BootstrapOptions& options) {
  if (times.size() != plan.size())
    throw ShapeMismatch("bootstrap: " + std::to_string(times.size()) + " times but " +
                        std::to_string(plan.size()) + " estimators");
  if (options.replicates < 2) throw std::invalid_argument("bootstrap needs at least 2 replicates");
  const std::size_t n = data.size();
  if (n == 0) throw EmptyArm("bootstrap on an empty dataset");
  const std::size_t k = times.size();

  // Full-sample fits provide Newton starting values for every resample.
  std::vector<WarmStart> warm(k);
  for (std::size_t j = 0; j < k; ++j) point_estimate(data, times[j], plan[j], nullptr, &warm[j]);

  Eigen::MatrixXd est(options.replicates, static_cast<Eigen::Index>(k));
  parallel_for_index(options.replicates, options.threads, [&](int b) {
    std::vector<std::size_t> index(n);
    for (int attempt = 0;; ++attempt) {
      std::mt19937_64 rng(stream_seed(options.seed, static_cast<std::uint64_t>(b),
                                      static_cast<std::uint64_t>(attempt)));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& i : index) i = pick(rng);
      const TrialDataset resample = data.rows(index);
      try {
        for (std::size_t j = 0; j < k; ++j)
          est(b, static_cast<Eigen::Index>(j)) = point_estimate(resample, times[j], plan[j], &warm[j]).value;
        return;
      } catch (const EstimatorFailure& e) {
        if (attempt >= options.retry_cap)
          throw EstimatorFailure("bootstrap replicate " + std::to_string(b) + ": " + e.what());
      }
    }
  });
  return est;
}

CovarianceEstimate bootstrap_covariance(const TrialDataset& data, std::span<const double> times,
                                        std::span<const EstimatorSpec> plan,
                                        const BootstrapOptions& options) {
  const Eigen::MatrixXd est = bootstrap_estimates(data, times, plan, options);
  CovarianceEstimate cov;
  cov.matrix = centered_crossprod(est) / static_cast<double>(est.rows() - 1);
  cov.method = CovarianceMethod::bootstrap;
  cov.n = static_cast<long>(data.size());
  cov.replicates = options.replicates;
  return cov;
}

CovarianceEstimate influence_covariance(const Eigen::MatrixXd& contributions, std::size_t expected_analyses) {
  if (static_cast<std::size_t>(contributions.cols()) != expected_analyses)
    throw ShapeMismatch("influence contributions have " + std::to_string(contributions.cols()) +
                        " columns, expected " + std::to_string(expected_analyses));
  const double n = static_cast<double>(contributions.rows());
  CovarianceEstimate cov;
  cov.method = CovarianceMethod::influence;
  cov.n = static_cast<long>(contributions.rows());
  cov.matrix = n > 0 ? Eigen::MatrixXd(centered_crossprod(contributions) / (n * n))
                     : Eigen::MatrixXd::Zero(contributions.cols(), contributions.cols());
  return cov;
}

Eigen::VectorXd influence_contributions(const TrialDataset& data, double t, const EstimatorSpec& spec,
                                        const WarmStart* warm, PointEstimate* point, WarmStart* fitted) {
  const std::size_t n = data.size();
  const double nd = static_cast<double>(n);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  if (spec.kind == EstimatorKind::unadjusted) {
    long count[2] = {0, 0};
    double sum[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      if (!data.outcome_observed(i, t)) continue;
      ++count[data.arm(i)];
      sum[data.arm(i)] += data.outcome(i);
    }
    if (count[0] < 2 || count[1] < 2) throw EmptyArm("influence contributions need 2 outcomes per arm");
    const double mean[2] = {sum[0] / count[0], sum[1] / count[1]};
    if (point) {
      point->value = mean[1] - mean[0];
      point->n_outcomes = count[0] + count[1];
      point->n_enrolled = static_cast<long>(data.count_enrolled(t));
    }
    // c1 * [A (Y - p1) / (pi1 m) - (1 - A)(Y - p0) / (pi0 m)], where pi_a m = n_a / n.
    for (std::size_t i = 0; i < n; ++i) {
      if (!data.outcome_observed(i, t)) continue;
      const int a = data.arm(i);
      const double sign = a == 1 ? 1.0 : -1.0;
      phi(i) = sign * (data.outcome(i) - mean[a]) * nd / count[a];
    }
    return phi;
  }

  if (spec.kind != EstimatorKind::standardization)
    throw std::invalid_argument("influence contributions are not available for the TMLE estimator");

  std::vector<std::size_t> cols;
  for (const auto& name : spec.covariates) cols.push_back(data.covariate_index(name));
  const StandardizationFit fit = fit_standardization(data, t, cols, spec.include_pipeline, warm);
  if (fitted) {
    fitted->arm_coef[0] = fit.arm_fit[0].coef;
    fitted->arm_coef[1] = fit.arm_fit[1].coef;
  }
  if (point) {
    point->value = fit.estimate;
    point->separation = fit.arm_fit[0].separated || fit.arm_fit[1].separated;
    point->n_enrolled = fit.n_enrolled;
    point->n_outcomes = fit.n_outcomes_arm[0] + fit.n_outcomes_arm[1];
    point->variance_factor = 1.0;
    if (spec.correction == SmallSampleCorrection::enabled) {
      const long p = static_cast<long>(cols.size());
      point->variance_factor =
          small_sample_correction_two_arm(fit.n_outcomes_arm[0], fit.n_outcomes_arm[1], p, p);
    }
  }
  const Eigen::Index q = static_cast<Eigen::Index>(cols.size()) + 1;

  std::vector<std::size_t> prediction_rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (!data.enrolled(i, t)) continue;
    if (spec.include_pipeline || data.outcome_observed(i, t)) prediction_rows.push_back(i);
  }
  const double n_pred = static_cast<double>(prediction_rows.size());
  const Eigen::MatrixXd Xp = covariate_matrix(data, prediction_rows, cols);
  Eigen::MatrixXd Xp1(Xp.rows(), q);
  Xp1.col(0).setOnes();
  Xp1.rightCols(q - 1) = Xp;

  Eigen::VectorXd m[2];
  for (int a = 0; a < 2; ++a) m[a] = fit.arm_fit[a].predict(Xp, fit.logistic);

  // Averaging over the prediction set.
  for (Eigen::Index r = 0; r < Xp.rows(); ++r)
    phi(prediction_rows[r]) += nd / n_pred * (m[1](r) - m[0](r) - fit.estimate);

  // Estimation of each arm's working model: d_a^T H_a^{-1} x_i (Y_i - m_a(x_i)).
  for (int a = 0; a < 2; ++a) {
    if (fit.arm_fit[a].constant) continue;  // no variation in Y: predictions do not move
    const Eigen::VectorXd v = fit.logistic ? Eigen::VectorXd(m[a].array() * (1.0 - m[a].array()))
                                           : Eigen::VectorXd::Ones(m[a].size());
    const Eigen::VectorXd d = Xp1.transpose() * v / n_pred;

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (data.arm(i) == a && data.outcome_observed(i, t)) rows.push_back(i);
    const Eigen::MatrixXd Xa = covariate_matrix(data, rows, cols);
    Eigen::MatrixXd Xa1(Xa.rows(), q);
    Xa1.col(0).setOnes();
    Xa1.rightCols(q - 1) = Xa;
    const Eigen::VectorXd ma = fit.arm_fit[a].predict(Xa, fit.logistic);
    const Eigen::VectorXd va = fit.logistic ? Eigen::VectorXd(ma.array() * (1.0 - ma.array()))
                                            : Eigen::VectorXd::Ones(ma.size());
    const Eigen::MatrixXd H = Xa1.transpose() * va.asDiagonal() * Xa1;
    const Eigen::VectorXd g = H.completeOrthogonalDecomposition().solve(d);
    const Eigen::VectorXd lever = Xa1 * g;
    const double sign = a == 1 ? 1.0 : -1.0;
    for (std::size_t r = 0; r < rows.size(); ++r)
      phi(rows[r]) += sign * nd * lever(r) * (data.outcome(rows[r]) - ma(r));
  }
  return phi;
}

}  // namespace agsd
