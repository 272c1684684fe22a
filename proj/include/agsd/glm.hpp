#pragma once

#include <optional>

#include <Eigen/Dense>

namespace agsd {

struct GlmOptions {
  int max_iterations = 50;
  double score_tolerance = 1e-8;
  // Bound on |coefficient| in the internally standardized parameterization;
  // reaching it is treated as (quasi-)complete separation.
  double coefficient_bound = 15.0;
};

// Fitted generalized linear model with an implicit intercept. `coef` holds
// (intercept, slopes...) on the caller's covariate scale.
struct GlmFit {
  Eigen::VectorXd coef;
  bool converged = false;
  bool separated = false;
  int iterations = 0;
  // Set when the binary response has no variation; predictions are constant.
  std::optional<double> constant;

  // Mean predictions for the rows of X (no intercept column). Logistic fits
  // return probabilities, linear fits return the linear predictor.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X, bool logistic) const;
};

// Weighted logistic regression for responses in [0, 1] (fractional responses
// are allowed). X carries no intercept column; `weights` may be empty.
// `start` is an optional warm start on the same scale as GlmFit::coef.
GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& weights = {}, const GlmOptions& options = {},
                    const Eigen::VectorXd* start = nullptr);

// Weighted least squares with intercept.
GlmFit fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights = {});

}  // namespace agsd
