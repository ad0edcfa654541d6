#include "polytrend/contrasts.hpp"

#include <cmath>

#include "polytrend/errors.hpp"

namespace polytrend {

ContrastMatrix williams_matrix(int k_groups) {
  if (k_groups < 2) throw FitError("williams_matrix: need >= 2 groups");
  ContrastMatrix cm;
  cm.rows = Eigen::MatrixXd::Zero(k_groups - 1, k_groups);
  for (int r = 1; r < k_groups; ++r) {
    cm.rows(r - 1, 0) = -1.0;
    for (int j = k_groups - r; j < k_groups; ++j) cm.rows(r - 1, j) = 1.0 / r;
    cm.labels.push_back("mean(top " + std::to_string(r) + ")-C");
  }
  return cm;
}

ContrastMatrix dunnett_matrix(int k_groups) {
  if (k_groups < 2) throw FitError("dunnett_matrix: need >= 2 groups");
  ContrastMatrix cm;
  cm.rows = Eigen::MatrixXd::Zero(k_groups - 1, k_groups);
  for (int r = 1; r < k_groups; ++r) {
    cm.rows(r - 1, 0) = -1.0;
    cm.rows(r - 1, r) = 1.0;
    cm.labels.push_back("D" + std::to_string(r) + "-C");
  }
  return cm;
}

JointTestResult contrast_test(const FittedModel& model, const ContrastMatrix& C,
                              const std::vector<int>& mean_coef_index,
                              double alpha, Reference reference, double df,
                              std::uint64_t seed) {
  const int k = static_cast<int>(C.rows.cols());
  const int nc = static_cast<int>(C.rows.rows());
  const int p = static_cast<int>(model.coefficients.size());
  if (static_cast<int>(mean_coef_index.size()) != k)
    throw FitError("contrast_test: mean_coef_index size disagrees with contrast columns");
  for (int idx : mean_coef_index)
    if (idx < 0 || idx >= p)
      throw FitError("contrast_test: coefficient index out of range");

  // group means under treatment coding: A beta
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, p);
  for (int j = 0; j < k; ++j) {
    A(j, mean_coef_index[0]) = 1.0;
    if (j > 0) A(j, mean_coef_index[j]) += 1.0;
  }
  Eigen::MatrixXd L = C.rows * A;

  JointEstimate je;
  je.labels = C.labels;
  je.estimates = L * model.coefficients;
  je.joint_covariance = L * model.covariance * L.transpose();
  je.joint_covariance =
      0.5 * (je.joint_covariance + je.joint_covariance.transpose()).eval();
  Eigen::VectorXd se = je.joint_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  je.correlation.resize(nc, nc);
  for (int a = 0; a < nc; ++a)
    for (int b = 0; b < nc; ++b)
      je.correlation(a, b) =
          (a == b) ? 1.0
                   : je.joint_covariance(a, b) / std::max(1e-300, se[a] * se[b]);
  je.correlation = je.correlation.cwiseMax(-1.0).cwiseMin(1.0);
  je.z_statistics = je.estimates.array() / se.array().max(1e-300);
  return max_test(je, alpha, reference, df, 1e-5, seed);
}

}  // namespace polytrend
