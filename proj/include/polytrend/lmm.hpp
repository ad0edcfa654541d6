#ifndef POLYTREND_LMM_HPP
#define POLYTREND_LMM_HPP

#include <Eigen/Dense>
#include <vector>

#include "polytrend/glm.hpp"

// Linear mixed models by profiled REML (Nelder-Mead over a log-Cholesky
// parameterization of the relative random-effects covariance), the
// penalized quasi-likelihood loop for binomial GLMMs on top of it, and
// extraction of a pseudo-fixed-effect FittedModel for joint testing.

namespace polytrend {

struct RandomEffectsSpec {
  enum class Terms { intercept_only, intercept_plus_slope };
  enum class Structure { unstructured, diagonal };
  Terms terms = Terms::intercept_only;
  Structure structure = Structure::unstructured;

  int q() const { return terms == Terms::intercept_only ? 1 : 2; }
  int n_variance_params() const {
    int q_ = q();
    return (structure == Structure::unstructured ? q_ * (q_ + 1) / 2 : q_) + 1;
  }
};

struct MixedFit {
  Eigen::VectorXd fixed_effects;
  Eigen::MatrixXd fixed_covariance;  // (X' V^-1 X)^-1
  Eigen::MatrixXd G;                 // random-effects covariance, q x q
  double sigma2 = 0.0;               // residual variance (unit weight scale)
  Eigen::MatrixXd blups;             // K x q
  Eigen::VectorXd eta;               // X beta + Z b
  double reml_objective = 0.0;       // profiled criterion at the optimum
  Eigen::VectorXd theta;             // optimizer coordinates at the optimum
  bool converged = false;
  int pql_iterations = 0;

  // working state at convergence, kept for mixed_to_fixed
  Eigen::VectorXd working_response;
  Eigen::VectorXd working_weights;
};

/// REML fit of y = X beta + Z b + e with b grouped by `group` (values in
/// [0, n_groups)) and Var(e_i) = sigma2 / weights_i.  Needs >= 2 groups.
MixedFit fit_lmm_reml(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                      const std::vector<int>& group, int n_groups,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                      const RandomEffectsSpec& spec,
                      const Eigen::VectorXd* warm_theta = nullptr);

/// GLS fit at fixed optimizer coordinates (no variance-parameter search).
/// Accepts a single group; used for degenerate checks and warm starts.
MixedFit fit_lmm_at_theta(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                          const std::vector<int>& group, int n_groups,
                          const Eigen::VectorXd& y,
                          const Eigen::VectorXd& weights,
                          const RandomEffectsSpec& spec,
                          const Eigen::VectorXd& theta);

/// Binomial GLMM by penalized quasi-likelihood: alternate the working
/// linearization with REML fits of the working response until the linear
/// predictor stabilizes.
MixedFit fit_binomial_pql(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                          const std::vector<int>& group, int n_groups,
                          const Eigen::VectorXd& successes,
                          const Eigen::VectorXd& failures,
                          const Eigen::VectorXd& prior_weights,
                          const RandomEffectsSpec& spec,
                          int max_outer = 100, double tol = 1e-6);

/// Collapse a converged mixed fit into a FittedModel whose per-row
/// contributions reproduce fixed_covariance under the joint-covariance
/// stacking (see mmm.hpp).
FittedModel mixed_to_fixed(const MixedFit& fit, const Eigen::MatrixXd& X,
                           const RandomEffectsSpec& spec,
                           const std::vector<std::string>& labels = {});

}  // namespace polytrend

#endif  // POLYTREND_LMM_HPP
