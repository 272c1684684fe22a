#include "agsd/glm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "agsd/numeric.hpp"

namespace agsd {

namespace {

// Newton steps no longer than this (in standardized coordinates) are accepted
// without step-halving.
constexpr double kTrustedStep = 0.5;

// Centering and scaling of the covariate columns. Newton steps are taken in
// the standardized coordinates so that the separation bound and the step
// sizes do not depend on the units of the covariates.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::vector<Eigen::Index> active;  // columns with non-zero spread

  Standardizer(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
    const double total = w.sum();
    mean = (X.transpose() * w) / total;
    scale = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double var = (w.array() * (X.col(j).array() - mean(j)).square()).sum() / total;
      const double sd = std::sqrt(var);
      if (sd > 1e-12 * std::max(1.0, std::abs(mean(j)))) {
        scale(j) = sd;
        active.push_back(j);
      }
    }
  }

  Eigen::MatrixXd design(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z(X.rows(), static_cast<Eigen::Index>(active.size()) + 1);
    Z.col(0).setOnes();
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Eigen::Index j = active[k];
      Z.col(k + 1) = (X.col(j).array() - mean(j)) / scale(j);
    }
    return Z;
  }

  Eigen::VectorXd to_original(const Eigen::VectorXd& b, Eigen::Index p) const {
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(p + 1);
    coef(0) = b(0);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Eigen::Index j = active[k];
      coef(j + 1) = b(k + 1) / scale(j);
      coef(0) -= b(k + 1) * mean(j) / scale(j);
    }
    return coef;
  }

  Eigen::VectorXd to_standardized(const Eigen::VectorXd& coef) const {
    Eigen::VectorXd b(static_cast<Eigen::Index>(active.size()) + 1);
    b(0) = coef(0);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Eigen::Index j = active[k];
      b(k + 1) = coef(j + 1) * scale(j);
      b(0) += coef(j + 1) * mean(j);
    }
    return b;
  }
};

Eigen::VectorXd solve_symmetric(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Eigen::VectorXd x = ldlt.solve(g);
    if (x.allFinite()) return x;
  }
  return H.completeOrthogonalDecomposition().solve(g);
}

// Log-likelihood at linear predictor eta; also stores the fitted
// probabilities in mu, sharing one exponential per row.
double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      Eigen::VectorXd& mu) {
  double ll = 0.0;
  mu.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    const double a = std::exp(-std::abs(e));
    mu(i) = e >= 0.0 ? 1.0 / (1.0 + a) : a / (1.0 + a);
    if (w(i) == 0.0) continue;
    ll += w(i) * (y(i) * e - (std::max(e, 0.0) + std::log1p(a)));
  }
  return ll;
}

Eigen::VectorXd resolve_weights(const Eigen::VectorXd& weights, Eigen::Index n) {
  if (weights.size() == 0) return Eigen::VectorXd::Ones(n);
  if (weights.size() != n) throw std::invalid_argument("weights length does not match rows");
  return weights;
}

}  // namespace

Eigen::VectorXd GlmFit::predict(const Eigen::MatrixXd& X, bool logistic) const {
  if (constant) return Eigen::VectorXd::Constant(X.rows(), *constant);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(X.rows(), coef(0));
  if (X.cols() > 0) eta.noalias() += X * coef.tail(X.cols());
  if (!logistic) return eta;
  return eta.unaryExpr([](double e) { return expit(e); });
}

GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                    const GlmOptions& options, const Eigen::VectorXd* start) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw std::invalid_argument("response length does not match rows");
  const Eigen::VectorXd w = resolve_weights(weights, n);
  if (!(w.sum() > 0.0)) throw std::invalid_argument("logistic fit needs positive total weight");

  GlmFit fit;
  double ymin = 1.0, ymax = 0.0, wy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w(i) == 0.0) continue;
    if (y(i) < 0.0 || y(i) > 1.0) throw std::invalid_argument("logistic response outside [0, 1]");
    ymin = std::min(ymin, y(i));
    ymax = std::max(ymax, y(i));
    wy += w(i) * y(i);
  }
  if (ymax == 0.0 || ymin == 1.0) {
    fit.constant = ymax == 0.0 ? 0.0 : 1.0;
    fit.coef = Eigen::VectorXd::Zero(p + 1);
    fit.coef(0) = ymax == 0.0 ? -options.coefficient_bound : options.coefficient_bound;
    fit.converged = true;
    return fit;
  }

  const Standardizer st(X, w);
  const Eigen::MatrixXd Z = st.design(X);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(Z.cols());
  if (start && start->size() == p + 1 && start->allFinite()) {
    b = st.to_standardized(*start);
  } else {
    b(0) = logit(wy / w.sum());
  }

  Eigen::VectorXd eta = Z * b;
  Eigen::VectorXd m, m_new, resid, curv, score, step, b_new, eta_new;
  Eigen::MatrixXd WZ, H;
  double ll = log_likelihood(eta, y, w, m);
  bool ll_known = true;
  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    resid = w.array() * (y - m).array();
    score.noalias() = Z.transpose() * resid;
    // Once the score is below tolerance one more Newton step is taken, which
    // brings the solution to near machine precision at negligible cost.
    const bool final_step = score.cwiseAbs().maxCoeff() < options.score_tolerance;
    curv = w.array() * m.array() * (1.0 - m.array());
    WZ = Z;
    WZ.array().colwise() *= curv.array();
    H.noalias() = Z.transpose() * WZ;
    step = solve_symmetric(H, score);
    if (step.cwiseAbs().maxCoeff() <= kTrustedStep) {
      // Short steps near the optimum are taken without a likelihood check.
      b += step;
      eta.noalias() = Z * b;
      m = eta.unaryExpr([](double e) { return expit(e); });
      ll_known = false;
    } else {
      if (!ll_known) ll = log_likelihood(eta, y, w, m);
      double t = 1.0;
      double ll_new = ll;
      for (int halving = 0; halving < 40; ++halving) {
        b_new = b + t * step;
        eta_new.noalias() = Z * b_new;
        ll_new = log_likelihood(eta_new, y, w, m_new);
        if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
        t *= 0.5;
      }
      b.swap(b_new);
      eta.swap(eta_new);
      m.swap(m_new);
      ll = ll_new;
      ll_known = true;
    }

    if (b.cwiseAbs().maxCoeff() > options.coefficient_bound) {
      b = b.cwiseMax(-options.coefficient_bound).cwiseMin(options.coefficient_bound);
      fit.separated = true;
      break;
    }
    if (final_step) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.separated && !fit.converged) {
    const Eigen::VectorXd final_score = Z.transpose() * (w.array() * (y - m).array()).matrix();
    fit.converged = final_score.cwiseAbs().maxCoeff() < options.score_tolerance;
  }
  fit.coef = st.to_original(b, p);
  return fit;
}

GlmFit fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& weights) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw std::invalid_argument("response length does not match rows");
  const Eigen::VectorXd w = resolve_weights(weights, n);
  if (!(w.sum() > 0.0)) throw std::invalid_argument("linear fit needs positive total weight");

  const Standardizer st(X, w);
  const Eigen::MatrixXd Z = st.design(X);
  Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z;
  Eigen::VectorXd rhs = Z.transpose() * (w.array() * y.array()).matrix();
  GlmFit fit;
  fit.coef = st.to_original(solve_symmetric(H, rhs), p);
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

}  // namespace agsd
