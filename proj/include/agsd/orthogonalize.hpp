#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "agsd/covariance.hpp"
#include "agsd/estimators.hpp"

namespace agsd {

// What solve_lambda does when the covariance of the increments is
// numerically singular (smallest eigenvalue < 1e-10 x largest).
enum class SingularPolicy {
  drop_increments,  // drop the lowest-variance increment and re-solve; lambda = 0 if none remain
  raise,            // throw SingularIncrementMatrix
};

// Covariance of (theta_k - theta_1, ..., theta_k - theta_{k-1}, theta_k) from
// the covariance of (theta_1, ..., theta_k).
Eigen::MatrixXd increment_covariance(const Eigen::MatrixXd& cov);

// Projection coefficients for the last estimator in `cov` (k >= 2): the
// coefficients of the increments in the least-variance combination
// theta_k - sum_j lambda_j (theta_k - theta_j).
Eigen::VectorXd solve_lambda(const Eigen::MatrixXd& cov, SingularPolicy policy = SingularPolicy::drop_increments);
Eigen::VectorXd solve_lambda(const CovarianceEstimate& cov, SingularPolicy policy = SingularPolicy::drop_increments);

// Variance of theta_k - sum_j lambda_j (theta_k - theta_j), as a quadratic form.
double orthogonalized_variance(const Eigen::MatrixXd& cov, const Eigen::VectorXd& lambda);

// Same coefficients computed through the upper-triangular Cholesky factor of
// the increment covariance and a QR least-squares solve. Test oracle only.
Eigen::VectorXd cholesky_lambda_oracle(const Eigen::MatrixXd& cov);

struct OrthogonalizedAnalysis {
  double theta_tilde = 0.0;
  Eigen::VectorXd lambda;  // length k - 1
  double std_error_tilde = 0.0;
  double info_tilde = 0.0;
  double z_tilde = 0.0;
};

struct OrthogonalizedSequence {
  std::vector<OrthogonalizedAnalysis> analyses;
  std::vector<EstimateSnapshot> source;
  CovarianceEstimate covariance;
};

// Analysis k uses the leading k x k block of `cov`. The first analysis is
// passed through unchanged, including its standard error.
OrthogonalizedSequence orthogonalize_sequence(std::span<const EstimateSnapshot> snapshots,
                                              const CovarianceEstimate& cov, double theta0,
                                              SingularPolicy policy = SingularPolicy::drop_increments);

}  // namespace agsd
