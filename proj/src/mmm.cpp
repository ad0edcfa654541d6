#include "polytrend/mmm.hpp"

#include <cmath>
#include <limits>

#include "polytrend/errors.hpp"

namespace polytrend {

JointEstimate stack_models(const std::vector<const FittedModel*>& models,
                           const std::vector<int>& coef_index,
                           const std::vector<std::string>& labels) {
  const int m = static_cast<int>(models.size());
  if (m < 1) throw FitError("stack_models: no models");
  if (static_cast<int>(coef_index.size()) != m)
    throw FitError("stack_models: one coefficient index per model required");

  const Eigen::Index n = models[0]->stack_rows.rows();
  int ptot = 0;
  for (int a = 0; a < m; ++a) {
    if (!models[a]->converged)
      throw FitError("stack_models: model " + std::to_string(a) + " not converged");
    if (models[a]->stack_rows.rows() != n)
      throw FitError("stack_models: row-count mismatch between models");
    if (coef_index[a] < 0 || coef_index[a] >= models[a]->coefficients.size())
      throw FitError("stack_models: coefficient index out of range");
    ptot += static_cast<int>(models[a]->coefficients.size());
  }

  // full covariance: blockdiag(cov) * K * blockdiag(cov), K from row-matched
  // cross-products of the stacking contributions
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(ptot, ptot);
  Eigen::MatrixXd Jinv = Eigen::MatrixXd::Zero(ptot, ptot);
  std::vector<int> offset(m + 1, 0);
  for (int a = 0; a < m; ++a)
    offset[a + 1] = offset[a] + static_cast<int>(models[a]->coefficients.size());
  for (int a = 0; a < m; ++a) {
    const int pa = offset[a + 1] - offset[a];
    Jinv.block(offset[a], offset[a], pa, pa) = models[a]->covariance;
    for (int b = 0; b < m; ++b) {
      const int pb = offset[b + 1] - offset[b];
      K.block(offset[a], offset[b], pa, pb) =
          models[a]->stack_rows.transpose() * models[b]->stack_rows;
    }
  }
  Eigen::MatrixXd full = Jinv * K * Jinv;

  JointEstimate je;
  je.labels = labels;
  je.estimates.resize(m);
  je.joint_covariance.resize(m, m);
  for (int a = 0; a < m; ++a) {
    je.estimates[a] = models[a]->coefficients[coef_index[a]];
    for (int b = 0; b < m; ++b)
      je.joint_covariance(a, b) =
          full(offset[a] + coef_index[a], offset[b] + coef_index[b]);
  }
  je.joint_covariance =
      0.5 * (je.joint_covariance + je.joint_covariance.transpose()).eval();

  Eigen::VectorXd se = je.joint_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  je.correlation.resize(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      je.correlation(a, b) =
          (a == b) ? 1.0
                   : je.joint_covariance(a, b) / std::max(1e-300, se[a] * se[b]);
  je.correlation = je.correlation.cwiseMax(-1.0).cwiseMin(1.0);
  je.z_statistics = je.estimates.array() / se.array().max(1e-300);
  return je;
}

JointTestResult max_test(const JointEstimate& joint, double alpha,
                         Reference reference, double df, double accuracy,
                         std::uint64_t seed, bool with_bounds) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw FitError("max_test: alpha outside (0,1)");
  const int m = static_cast<int>(joint.estimates.size());
  const bool use_t = reference == Reference::student_t && df > 0.0;

  JointTestResult res;
  res.joint = joint;
  res.alpha = alpha;
  res.t_max = joint.z_statistics.maxCoeff();
  res.adjusted_p.resize(m);
  res.unadjusted_p.resize(m);

  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(m, -kInf);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  for (int j = 0; j < m; ++j) {
    const double zj = joint.z_statistics[j];
    if (use_t) {
      Eigen::VectorXd lo1 = Eigen::VectorXd::Constant(1, -kInf);
      Eigen::VectorXd up1 = Eigen::VectorXd::Constant(1, zj);
      res.unadjusted_p[j] = 1.0 - mvt_rectangle(lo1, up1, one, df, accuracy, seed).value;
    } else {
      res.unadjusted_p[j] = 1.0 - normal_cdf(zj);
    }
    Eigen::VectorXd upper = Eigen::VectorXd::Constant(m, zj);
    MvnResult rect =
        use_t ? mvt_rectangle(lower, upper, joint.correlation, df, accuracy, seed)
              : mvn_rectangle(lower, upper, joint.correlation, accuracy, seed);
    res.adjusted_p[j] = std::min(1.0, std::max(0.0, 1.0 - rect.value));
  }

  if (with_bounds) {
    res.critical_value =
        use_t ? equicoordinate_quantile_t(joint.correlation, 1.0 - alpha, df,
                                          accuracy, seed)
              : equicoordinate_quantile(joint.correlation, 1.0 - alpha, accuracy,
                                        seed);
    Eigen::VectorXd se = joint.joint_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    res.simultaneous_lower_bounds = joint.estimates - res.critical_value * se;
  } else {
    res.critical_value = std::numeric_limits<double>::quiet_NaN();
    res.simultaneous_lower_bounds =
        Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
  }
  return res;
}

}  // namespace polytrend
