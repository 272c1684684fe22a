#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "agsd/dataset.hpp"
#include "agsd/estimators.hpp"

namespace agsd {

enum class CovarianceMethod { bootstrap, influence };

struct CovarianceEstimate {
  Eigen::MatrixXd matrix;
  CovarianceMethod method = CovarianceMethod::bootstrap;
  long n = 0;
  long replicates = 0;  // bootstrap only
};

// Checks symmetry (1e-12), PSD up to -1e-10 and a positive diagonal. Returns
// false and fills `reason` when any check fails.
bool check_covariance(const CovarianceEstimate& cov, std::string* reason = nullptr);

struct BootstrapOptions {
  int replicates = 1000;
  std::uint64_t seed = 1;
  int retry_cap = 10;  // fresh resamples tried when an estimator fails
  int threads = 1;
};

// Joint covariance of plan[k] evaluated at times[k], by resampling subjects
// (rows) with replacement. Each replicate draws from its own stream derived
// from (seed, replicate index), so the result does not depend on `threads`.
CovarianceEstimate bootstrap_covariance(const TrialDataset& data, std::span<const double> times,
                                        std::span<const EstimatorSpec> plan,
                                        const BootstrapOptions& options);

// Bootstrap estimate vectors (B x k) behind bootstrap_covariance; exposed for
// diagnostics and tests.
Eigen::MatrixXd bootstrap_estimates(const TrialDataset& data, std::span<const double> times,
                                    std::span<const EstimatorSpec> plan, const BootstrapOptions& options);

// (1/n^2) * sum_i phi_i phi_i^T after centering each column.
CovarianceEstimate influence_covariance(const Eigen::MatrixXd& contributions, std::size_t expected_analyses);

// Per-subject influence contributions, one entry per dataset row (rows not
// enrolled at t contribute zero). Closed form for the unadjusted estimator;
// delta-method form for standardization. TMLE is not supported. When `point`
// is given it receives the point estimate from the same fit, and `fitted` the
// working-model coefficients.
Eigen::VectorXd influence_contributions(const TrialDataset& data, double t, const EstimatorSpec& spec,
                                        const WarmStart* warm = nullptr, PointEstimate* point = nullptr,
                                        WarmStart* fitted = nullptr);

}  // namespace agsd
