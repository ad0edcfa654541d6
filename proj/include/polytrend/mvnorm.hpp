#ifndef POLYTREND_MVNORM_HPP
#define POLYTREND_MVNORM_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <limits>

// Multivariate normal / t rectangle probabilities and equicoordinate
// quantiles via the Genz separation-of-variables transform with a
// randomized Richtmyer lattice rule, plus the scalar distributions the
// rest of the library needs.

namespace polytrend {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr std::uint64_t kDefaultSeed = 20260810u;

// ---------------------------------------------------------------------
// Scalar distributions
// ---------------------------------------------------------------------

/// Standard normal CDF, absolute error below 1e-12.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal quantile; normal_quantile(normal_cdf(x)) ~ x to 1e-9
/// on [-6, 6].
double normal_quantile(double p);

/// Upper tail P(X >= x) for X ~ chi-square(df).  df > 0, x >= 0.
double chisq_upper_tail(double x, double df);

/// Lower-tail chi-square quantile.  p in (0,1), df > 0.
double chisq_quantile(double p, double df);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// ---------------------------------------------------------------------
// Rectangle probabilities
// ---------------------------------------------------------------------

struct MvnResult {
  double value = 0.0;
  double error = 0.0;        // ~99% error bound from batch spread
  bool reliable = true;      // error <= requested accuracy
  bool regularized = false;  // diagonal ridge was applied to factor R
};

/// P(lower <= Z <= upper) for Z ~ N(0, R); entries of lower/upper may be
/// -inf / +inf.  Deterministic for a given seed.  Dimension <= 10.
MvnResult mvn_rectangle(const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper,
                        const Eigen::MatrixXd& R,
                        double accuracy = 1e-5,
                        std::uint64_t seed = kDefaultSeed);

/// Central multivariate t rectangle probability with df degrees of freedom.
MvnResult mvt_rectangle(const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper,
                        const Eigen::MatrixXd& R,
                        double df,
                        double accuracy = 1e-5,
                        std::uint64_t seed = kDefaultSeed);

/// Smallest c with P(Z <= c·1) = prob under N(0, R), found by safeguarded
/// bisection; |result - truth| <= ~1e-4 for well-conditioned R.
double equicoordinate_quantile(const Eigen::MatrixXd& R,
                               double prob,
                               double accuracy = 1e-6,
                               std::uint64_t seed = kDefaultSeed);

/// t-reference variant of the above.
double equicoordinate_quantile_t(const Eigen::MatrixXd& R,
                                 double prob,
                                 double df,
                                 double accuracy = 1e-6,
                                 std::uint64_t seed = kDefaultSeed);

}  // namespace polytrend

#endif  // POLYTREND_MVNORM_HPP
