#ifndef POLYTREND_CONTRASTS_HPP
#define POLYTREND_CONTRASTS_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "polytrend/glm.hpp"
#include "polytrend/mmm.hpp"

// Williams- and Dunnett-type multiple contrast tests over dose-level
// factors.

namespace polytrend {

struct ContrastMatrix {
  Eigen::MatrixXd rows;             // contrasts x group levels (ascending dose)
  std::vector<std::string> labels;  // one per contrast row
};

/// Williams row r compares the average of the top r dose groups against
/// control: (-1, 0, ..., 0, 1/r, ..., 1/r).
ContrastMatrix williams_matrix(int k_groups);

/// Dunnett rows compare each dose group to control: (-1, e_r).
ContrastMatrix dunnett_matrix(int k_groups);

/// One-sided (greater) multiple contrast test on a factor-coded model.
/// mean_coef_index maps group levels to coefficients under treatment
/// coding: mean_j = beta[mean_coef_index[0]] + beta[mean_coef_index[j]]
/// for j > 0 (index 0 is the intercept / control reference).
JointTestResult contrast_test(const FittedModel& model, const ContrastMatrix& C,
                              const std::vector<int>& mean_coef_index,
                              double alpha,
                              Reference reference = Reference::normal,
                              double df = 0.0,
                              std::uint64_t seed = kDefaultSeed);

}  // namespace polytrend

#endif  // POLYTREND_CONTRASTS_HPP
