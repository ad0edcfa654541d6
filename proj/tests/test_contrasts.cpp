#include <doctest.h>

#include <cmath>

#include "polytrend/contrasts.hpp"
#include "polytrend/errors.hpp"

using namespace polytrend;

TEST_CASE("williams matrix") {
  ContrastMatrix c2 = williams_matrix(2);
  REQUIRE(c2.rows.rows() == 1);
  CHECK(c2.rows(0, 0) == -1.0);
  CHECK(c2.rows(0, 1) == 1.0);

  ContrastMatrix c4 = williams_matrix(4);
  REQUIRE(c4.rows.rows() == 3);
  Eigen::MatrixXd expect(3, 4);
  expect << -1, 0, 0, 1,
            -1, 0, 0.5, 0.5,
            -1, 1.0 / 3, 1.0 / 3, 1.0 / 3;
  CHECK((c4.rows - expect).cwiseAbs().maxCoeff() < 1e-15);
  for (int r = 0; r < 3; ++r)
    CHECK(c4.rows.row(r).sum() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(williams_matrix(1), FitError);
}

TEST_CASE("dunnett matrix") {
  ContrastMatrix c4 = dunnett_matrix(4);
  REQUIRE(c4.rows.rows() == 3);
  Eigen::MatrixXd expect(3, 4);
  expect << -1, 1, 0, 0,
            -1, 0, 1, 0,
            -1, 0, 0, 1;
  CHECK((c4.rows - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c4.labels[0] == "D1-C");
  CHECK(c4.labels[1] == "D2-C");
  CHECK(c4.labels[2] == "D3-C");
  ContrastMatrix c2 = dunnett_matrix(2);
  CHECK(c2.rows(0, 0) == -1.0);
  CHECK(c2.rows(0, 1) == 1.0);
  for (int r = 0; r < 3; ++r)
    CHECK(c4.rows.row(r).sum() == doctest::Approx(0.0));
  CHECK_THROWS_AS(dunnett_matrix(1), FitError);
}

TEST_CASE("1-row contrast reproduces the univariate one-sided z test") {
  // two-group factor model: intercept + indicator
  DesignMatrix d;
  d.X.resize(2, 2);
  d.X << 1, 0, 1, 1;
  Eigen::VectorXd succ(2), fail(2);
  succ << 4, 12;
  fail << 46, 38;
  FittedModel f = fit_binomial_glm(d, succ, fail, Eigen::VectorXd::Ones(2));
  REQUIRE(f.converged);

  JointTestResult r = contrast_test(f, dunnett_matrix(2), {0, 1}, 0.05);
  // the contrast estimate is beta_1 itself under treatment coding
  CHECK(r.joint.estimates[0] == doctest::Approx(f.coefficients[1]).epsilon(1e-12));
  double z = f.coefficients[1] / std::sqrt(f.covariance(1, 1));
  CHECK(r.joint.z_statistics[0] == doctest::Approx(z).epsilon(1e-10));
  CHECK(r.adjusted_p[0] == doctest::Approx(1.0 - normal_cdf(z)).epsilon(1e-6));
  CHECK(r.unadjusted_p[0] == doctest::Approx(r.adjusted_p[0]).epsilon(1e-6));
}

TEST_CASE("contrast test on a 4-level factor with a nuisance column") {
  // factor levels 0..3 plus one extra block indicator the contrasts ignore
  DesignMatrix d;
  d.X = Eigen::MatrixXd::Zero(8, 5);
  Eigen::VectorXd succ(8), fail(8);
  for (int b = 0; b < 2; ++b)
    for (int j = 0; j < 4; ++j) {
      int i = 4 * b + j;
      d.X(i, 0) = 1.0;
      if (j > 0) d.X(i, j) = 1.0;
      if (b > 0) d.X(i, 4) = 1.0;
      succ[i] = 2 + 3 * j + b;
      fail[i] = 50 - succ[i];
    }
  FittedModel f = fit_binomial_glm(d, succ, fail, Eigen::VectorXd::Ones(8));
  REQUIRE(f.converged);

  JointTestResult w = contrast_test(f, williams_matrix(4), {0, 1, 2, 3}, 0.05);
  REQUIRE(w.adjusted_p.size() == 3);
  // monotone data: every Williams contrast positive, top-vs-control largest z
  for (int r = 0; r < 3; ++r) CHECK(w.joint.estimates[r] > 0.0);
  CHECK(w.adjusted_p.minCoeff() < 0.05);

  JointTestResult dn = contrast_test(f, dunnett_matrix(4), {0, 1, 2, 3}, 0.05);
  // Dunnett highest-dose row equals beta_3 exactly
  CHECK(dn.joint.estimates[2] == doctest::Approx(f.coefficients[3]).epsilon(1e-12));

  CHECK_THROWS_AS(contrast_test(f, williams_matrix(3), {0, 1, 2, 3}, 0.05), FitError);
  CHECK_THROWS_AS(contrast_test(f, williams_matrix(4), {0, 1, 2, 9}, 0.05), FitError);
}
