#include "polytrend/glm.hpp"

#include <cmath>

#include "polytrend/errors.hpp"

namespace polytrend {

namespace {

double binomial_minus2_loglik(const Eigen::VectorXd& succ,
                              const Eigen::VectorXd& fail,
                              const Eigen::VectorXd& w,
                              const Eigen::VectorXd& mu) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < succ.size(); ++i) {
    if (succ[i] > 0.0) ll += w[i] * succ[i] * std::log(mu[i]);
    if (fail[i] > 0.0) ll += w[i] * fail[i] * std::log(1.0 - mu[i]);
  }
  return -2.0 * ll;
}

Eigen::VectorXd logistic(const Eigen::VectorXd& eta) {
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double m = 1.0 / (1.0 + std::exp(-eta[i]));
    mu[i] = std::min(std::max(m, 1e-12), 1.0 - 1e-12);
  }
  return mu;
}

}  // namespace

FittedModel fit_binomial_glm(const DesignMatrix& design,
                             const Eigen::VectorXd& successes,
                             const Eigen::VectorXd& failures,
                             const Eigen::VectorXd& prior_weights,
                             double tol, int max_iter) {
  const Eigen::MatrixXd& X = design.X;
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (successes.size() != n || failures.size() != n || prior_weights.size() != n)
    throw FitError("fit_binomial_glm: dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (successes[i] < 0.0 || failures[i] < 0.0)
      throw FitError("fit_binomial_glm: negative counts");
    if (successes[i] + failures[i] <= 0.0)
      throw FitError("fit_binomial_glm: zero trials in row " + std::to_string(i));
    if (prior_weights[i] <= 0.0)
      throw FitError("fit_binomial_glm: nonpositive prior weight");
  }

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p)
      throw FitError("fit_binomial_glm: rank-deficient design (rank " +
                     std::to_string(qr.rank()) + " < " + std::to_string(p) + ")");
  }

  const Eigen::VectorXd ntot = successes + failures;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mu = logistic(X * beta);
  double dev = binomial_minus2_loglik(successes, failures, prior_weights, mu);

  FittedModel out;
  out.labels = design.labels;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Eigen::VectorXd eta = X * beta;
    mu = logistic(eta);
    Eigen::VectorXd W = prior_weights.array() * ntot.array() * mu.array() * (1.0 - mu.array());
    Eigen::VectorXd z = eta.array() +
        (successes.array() - ntot.array() * mu.array()) /
            (ntot.array() * mu.array() * (1.0 - mu.array()));
    Eigen::VectorXd sw = W.cwiseSqrt();
    Eigen::MatrixXd Xw = sw.asDiagonal() * X;
    Eigen::VectorXd zw = sw.asDiagonal() * z;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    Eigen::VectorXd beta_new = qr.solve(zw);

    // step-halving keeps the deviance monotone
    Eigen::VectorXd step = beta_new - beta;
    double dev_new = binomial_minus2_loglik(successes, failures, prior_weights,
                                            logistic(X * beta_new));
    int halvings = 0;
    while (dev_new > dev + 1e-12 && halvings < 20) {
      step *= 0.5;
      beta_new = beta + step;
      dev_new = binomial_minus2_loglik(successes, failures, prior_weights,
                                       logistic(X * beta_new));
      ++halvings;
    }
    beta = beta_new;
    bool done = std::fabs(dev - dev_new) < tol * (std::fabs(dev_new) + 0.1);
    dev = dev_new;
    if (done) {
      out.converged = true;
      ++iter;
      break;
    }
  }

  mu = logistic(X * beta);
  Eigen::VectorXd W = prior_weights.array() * ntot.array() * mu.array() * (1.0 - mu.array());
  Eigen::MatrixXd info = X.transpose() * W.asDiagonal() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  out.coefficients = beta;
  out.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.score_contributions =
      (prior_weights.array() * (successes.array() - ntot.array() * mu.array()))
          .matrix()
          .asDiagonal() *
      X;
  out.stack_rows = W.cwiseSqrt().asDiagonal() * X;
  out.residual_df = static_cast<double>(n - p);
  out.iterations = iter;
  out.separation = beta.cwiseAbs().maxCoeff() > 30.0;
  out.deviance = dev;
  return out;
}

double profile_deviance(const FittedModel& model, const DesignMatrix& design,
                        const Eigen::VectorXd& successes,
                        const Eigen::VectorXd& failures,
                        const Eigen::VectorXd& prior_weights) {
  Eigen::VectorXd mu = logistic(design.X * model.coefficients);
  return binomial_minus2_loglik(successes, failures, prior_weights, mu);
}

}  // namespace polytrend
