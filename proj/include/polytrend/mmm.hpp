#ifndef POLYTREND_MMM_HPP
#define POLYTREND_MMM_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "polytrend/glm.hpp"
#include "polytrend/mvnorm.hpp"

// Multiple-marginal-models stacking of per-scoring slope estimates and the
// one-sided maximum trend test over their joint normal (or t) distribution.

namespace polytrend {

struct JointEstimate {
  std::vector<std::string> labels;
  Eigen::VectorXd estimates;
  Eigen::MatrixXd joint_covariance;
  Eigen::MatrixXd correlation;
  Eigen::VectorXd z_statistics;
};

struct JointTestResult {
  JointEstimate joint;
  double t_max = 0.0;
  Eigen::VectorXd adjusted_p;
  Eigen::VectorXd unadjusted_p;
  double critical_value = 0.0;
  Eigen::VectorXd simultaneous_lower_bounds;
  double alpha = 0.05;
};

enum class Reference { normal, student_t };

/// Stack one coefficient from each row-aligned model.  The joint covariance
/// is built from cross-products of the models' per-row stacking
/// contributions sandwiched between the model covariances; its diagonal
/// reproduces each model's own variance.
JointEstimate stack_models(const std::vector<const FittedModel*>& models,
                           const std::vector<int>& coef_index,
                           const std::vector<std::string>& labels);

/// One-sided (greater) single-step max test: adjusted p, equicoordinate
/// critical value and simultaneous lower bounds.  with_bounds=false skips
/// the critical-value search (adjusted p only; simulation hot path).
JointTestResult max_test(const JointEstimate& joint, double alpha,
                         Reference reference = Reference::normal,
                         double df = 0.0,
                         double accuracy = 1e-5,
                         std::uint64_t seed = kDefaultSeed,
                         bool with_bounds = true);

}  // namespace polytrend

#endif  // POLYTREND_MMM_HPP
