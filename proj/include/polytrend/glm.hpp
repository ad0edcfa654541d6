#ifndef POLYTREND_GLM_HPP
#define POLYTREND_GLM_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

// Weighted binomial logistic regression by iteratively reweighted least
// squares.  Successes/failures are real-valued so pseudo-count adjusted
// data fits through the same path.

namespace polytrend {

struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> labels;

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cols() const { return X.cols(); }
};

struct FittedModel {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;          // inverse Fisher information
  Eigen::MatrixXd score_contributions; // n x p, row i = w_i (y_i - n_i mu_i) x_i
  Eigen::MatrixXd stack_rows;          // n x p rows whose cross-products feed the
                                       // joint (mmm) covariance; Gram = information
  double residual_df = 0.0;
  bool converged = false;
  int iterations = 0;
  bool separation = false;
  double deviance = 0.0;               // -2 log-likelihood at the estimate
  std::vector<std::string> labels;
};

/// Fit successes/failures ~ Binomial(logit) on the given design.
/// Non-convergence and separation are flagged on the result, never thrown;
/// a rank-deficient design throws FitError.
FittedModel fit_binomial_glm(const DesignMatrix& design,
                             const Eigen::VectorXd& successes,
                             const Eigen::VectorXd& failures,
                             const Eigen::VectorXd& prior_weights,
                             double tol = 1e-10,
                             int max_iter = 100);

/// -2 log-likelihood of the fitted coefficients on the given data.
double profile_deviance(const FittedModel& model,
                        const DesignMatrix& design,
                        const Eigen::VectorXd& successes,
                        const Eigen::VectorXd& failures,
                        const Eigen::VectorXd& prior_weights);

}  // namespace polytrend

#endif  // POLYTREND_GLM_HPP
