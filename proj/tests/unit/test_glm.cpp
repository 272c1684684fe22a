#include "catch_amalgamated.hpp"

#include "agsd/glm.hpp"

using Catch::Approx;

namespace {

// Reference coefficients from an independent IRLS implementation (statsmodels).
Eigen::MatrixXd design() {
  Eigen::MatrixXd X(12, 2);
  X.col(0) << 0.5, -1.2, 0.3, 2.1, -0.7, 1.5, -0.2, 0.9, -1.8, 0.4, 1.1, -0.5;
  X.col(1) << 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1;
  return X;
}

Eigen::VectorXd response() {
  Eigen::VectorXd y(12);
  y << 1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 1;
  return y;
}

Eigen::VectorXd case_weights() {
  Eigen::VectorXd w(12);
  w << 1, 2, 1, 0.5, 1, 1, 3, 1, 1, 2, 1, 1;
  return w;
}

}  // namespace

TEST_CASE("logistic MLE matches reference coefficients") {
  const agsd::GlmFit fit = agsd::fit_logistic(design(), response());
  REQUIRE(fit.converged);
  CHECK_FALSE(fit.separated);
  CHECK(fit.coef(0) == Approx(-0.04258805477029426).margin(1e-8));
  CHECK(fit.coef(1) == Approx(2.4386571288677823).margin(1e-8));
  CHECK(fit.coef(2) == Approx(0.25205895202224343).margin(1e-8));
}

TEST_CASE("weighted logistic MLE matches reference coefficients") {
  const agsd::GlmFit fit = agsd::fit_logistic(design(), response(), case_weights());
  REQUIRE(fit.converged);
  CHECK(fit.coef(0) == Approx(-0.17130667674603506).margin(1e-8));
  CHECK(fit.coef(1) == Approx(2.5212205052509216).margin(1e-8));
  CHECK(fit.coef(2) == Approx(-0.6028789938046503).margin(1e-8));
}

TEST_CASE("warm start reaches the same optimum") {
  const agsd::GlmFit cold = agsd::fit_logistic(design(), response());
  Eigen::VectorXd start(3);
  start << 0.3, 1.0, -0.2;
  const agsd::GlmFit warm = agsd::fit_logistic(design(), response(), {}, {}, &start);
  CHECK((warm.coef - cold.coef).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("weighted least squares matches reference coefficients") {
  Eigen::VectorXd y(12);
  y << 2.3, 1.1, 3.5, 4.0, 0.2, 2.2, 1.9, 3.1, 0.5, 2.8, 3.3, 1.7;
  const agsd::GlmFit fit = agsd::fit_linear(design(), y, case_weights());
  CHECK(fit.coef(0) == Approx(1.7740737049311037).margin(1e-10));
  CHECK(fit.coef(1) == Approx(0.8888944260334384).margin(1e-10));
  CHECK(fit.coef(2) == Approx(0.4914235168066183).margin(1e-10));
}

TEST_CASE("complete separation is clipped and flagged") {
  Eigen::MatrixXd X(6, 1);
  X << -3, -2, -1, 1, 2, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  const agsd::GlmFit fit = agsd::fit_logistic(X, y);
  CHECK(fit.separated);
  const Eigen::VectorXd p = fit.predict(X, true);
  CHECK(p.allFinite());
  CHECK(p(0) < 1e-3);
  CHECK(p(5) > 1.0 - 1e-3);
}

TEST_CASE("response without variation gives a constant fit") {
  Eigen::MatrixXd X(4, 1);
  X << 0.1, 0.5, -0.3, 2.0;
  const agsd::GlmFit fit = agsd::fit_logistic(X, Eigen::VectorXd::Ones(4));
  REQUIRE(fit.constant.has_value());
  CHECK(*fit.constant == 1.0);
  CHECK(fit.predict(X, true).isApproxToConstant(1.0));
}

TEST_CASE("intercept-only fit predicts the sample mean") {
  const Eigen::MatrixXd X(12, 0);
  const agsd::GlmFit fit = agsd::fit_logistic(X, response());
  CHECK(fit.predict(X, true)(0) == Approx(7.0 / 12.0).epsilon(1e-12));
}
