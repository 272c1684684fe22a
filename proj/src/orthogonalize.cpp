#include "agsd/orthogonalize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agsd/errors.hpp"

namespace agsd {

Eigen::MatrixXd increment_covariance(const Eigen::MatrixXd& cov) {
  const Eigen::Index k = cov.rows();
  if (cov.cols() != k || k < 1) throw ShapeMismatch("covariance must be a non-empty square matrix");
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j + 1 < k; ++j) {
    T(j, k - 1) = 1.0;
    T(j, j) = -1.0;
  }
  T(k - 1, k - 1) = 1.0;
  Eigen::MatrixXd S = T * cov * T.transpose();
  return 0.5 * (S + S.transpose());
}

Eigen::VectorXd solve_lambda(const Eigen::MatrixXd& cov, SingularPolicy policy) {
  const Eigen::Index k = cov.rows();
  if (k < 2) throw std::invalid_argument("solve_lambda needs at least two analyses");
  const Eigen::MatrixXd S = increment_covariance(cov);
  const Eigen::MatrixXd V = S.topLeftCorner(k - 1, k - 1);
  const Eigen::VectorXd c = S.col(k - 1).head(k - 1);

  std::vector<Eigen::Index> active(k - 1);
  for (Eigen::Index j = 0; j < k - 1; ++j) active[j] = j;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k - 1);

  while (!active.empty()) {
    const Eigen::Index m = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd Va(m, m);
    Eigen::VectorXd ca(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      ca(r) = c(active[r]);
      for (Eigen::Index s = 0; s < m; ++s) Va(r, s) = V(active[r], active[s]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Va, Eigen::EigenvaluesOnly);
    const double largest = es.eigenvalues().maxCoeff();
    const double smallest = es.eigenvalues().minCoeff();
    if (largest > 0.0 && smallest >= 1e-10 * largest) {
      const Eigen::VectorXd sol = Va.llt().solve(ca);
      for (Eigen::Index r = 0; r < m; ++r) lambda(active[r]) = sol(r);
      return lambda;
    }
    if (policy == SingularPolicy::raise)
      throw SingularIncrementMatrix("increment covariance is singular (eigenvalues " + std::to_string(smallest) +
                                    " .. " + std::to_string(largest) + ")");
    auto lowest = std::min_element(active.begin(), active.end(),
                                   [&](Eigen::Index a, Eigen::Index b) { return V(a, a) < V(b, b); });
    active.erase(lowest);
  }
  return lambda;
}

Eigen::VectorXd solve_lambda(const CovarianceEstimate& cov, SingularPolicy policy) {
  return solve_lambda(cov.matrix, policy);
}

double orthogonalized_variance(const Eigen::MatrixXd& cov, const Eigen::VectorXd& lambda) {
  const Eigen::Index k = cov.rows();
  if (lambda.size() != k - 1) throw ShapeMismatch("lambda length must be k - 1");
  Eigen::VectorXd q(k);
  q.head(k - 1) = -lambda;
  q(k - 1) = 1.0;
  return q.dot(increment_covariance(cov) * q);
}

Eigen::VectorXd cholesky_lambda_oracle(const Eigen::MatrixXd& cov) {
  const Eigen::Index k = cov.rows();
  if (k < 2) throw std::invalid_argument("cholesky_lambda_oracle needs at least two analyses");
  const Eigen::MatrixXd S = increment_covariance(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("increment covariance is not positive definite");
  const Eigen::MatrixXd A = llt.matrixU();  // S = A^T A
  const Eigen::MatrixXd A_lead = A.leftCols(k - 1);
  const Eigen::VectorXd A_last = A.col(k - 1);
  return A_lead.householderQr().solve(A_last);
}

OrthogonalizedSequence orthogonalize_sequence(std::span<const EstimateSnapshot> snapshots,
                                              const CovarianceEstimate& cov, double theta0,
                                              SingularPolicy policy) {
  const Eigen::Index K = static_cast<Eigen::Index>(snapshots.size());
  if (K == 0) throw std::invalid_argument("orthogonalize_sequence needs at least one snapshot");
  if (cov.matrix.rows() != K || cov.matrix.cols() != K)
    throw ShapeMismatch("covariance is " + std::to_string(cov.matrix.rows()) + "x" +
                        std::to_string(cov.matrix.cols()) + " for " + std::to_string(K) + " snapshots");

  OrthogonalizedSequence out;
  out.source.assign(snapshots.begin(), snapshots.end());
  out.covariance = cov;

  for (Eigen::Index k = 1; k <= K; ++k) {
    OrthogonalizedAnalysis a;
    const EstimateSnapshot& s = snapshots[k - 1];
    if (k == 1) {
      a.theta_tilde = s.estimate;
      a.lambda = Eigen::VectorXd(0);
      a.std_error_tilde = s.std_error;
      a.info_tilde = s.information;
    } else {
      const Eigen::MatrixXd block = cov.matrix.topLeftCorner(k, k);
      a.lambda = solve_lambda(block, policy);
      a.theta_tilde = s.estimate;
      for (Eigen::Index j = 0; j < k - 1; ++j)
        a.theta_tilde -= a.lambda(j) * (s.estimate - snapshots[j].estimate);
      const double var = std::max(orthogonalized_variance(block, a.lambda), 0.0);
      a.std_error_tilde = std::sqrt(var);
      a.info_tilde = var > 0.0 ? 1.0 / var : std::numeric_limits<double>::infinity();
    }
    a.z_tilde = (a.theta_tilde - theta0) / a.std_error_tilde;
    out.analyses.push_back(std::move(a));
  }
  return out;
}

}  // namespace agsd
