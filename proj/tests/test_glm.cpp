#include <doctest.h>

#include <cmath>
#include <random>

#include "polytrend/errors.hpp"
#include "polytrend/glm.hpp"

#include "oracles.hpp"

using namespace polytrend;

namespace {

DesignMatrix intercept_slope(const Eigen::VectorXd& score) {
  DesignMatrix d;
  d.X.resize(score.size(), 2);
  d.X.col(0).setOnes();
  d.X.col(1) = score;
  d.labels = {"intercept", "slope"};
  return d;
}

Eigen::VectorXd ones(Eigen::Index n) { return Eigen::VectorXd::Ones(n); }

}  // namespace

TEST_CASE("intercept-only fit is the closed-form logit") {
  DesignMatrix d;
  d.X = Eigen::MatrixXd::Ones(1, 1);
  Eigen::VectorXd succ(1), fail(1);
  succ << 8;
  fail << 42;
  FittedModel f = fit_binomial_glm(d, succ, fail, ones(1));
  CHECK(f.converged);
  CHECK(f.coefficients[0] == doctest::Approx(std::log(0.16 / 0.84)).epsilon(1e-9));
  CHECK(f.coefficients[0] == doctest::Approx(-1.6582280766035322).epsilon(1e-9));
  // deviance at the estimate = -2 [8 ln .16 + 42 ln .84]
  CHECK(f.deviance == doctest::Approx(43.9669879401343).epsilon(1e-9));
  CHECK(profile_deviance(f, d, succ, fail, ones(1)) ==
        doctest::Approx(f.deviance).epsilon(1e-12));
}

TEST_CASE("perfect one-row fit has zero deviance") {
  DesignMatrix d;
  d.X = Eigen::MatrixXd::Ones(1, 1);
  Eigen::VectorXd succ(1), fail(1);
  succ << 5;
  fail << 0;
  FittedModel f = fit_binomial_glm(d, succ, fail, ones(1));
  CHECK(f.deviance == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(f.separation);  // mu -> 1 only as beta diverges
}

TEST_CASE("IRLS matches the Newton oracle on randomized small datasets") {
  std::mt19937 rng(912837);
  std::uniform_int_distribution<int> n_groups(3, 6);
  std::uniform_int_distribution<int> n_per(10, 60);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  int checked = 0;
  for (int rep = 0; rep < 60 && checked < 50; ++rep) {
    int g = n_groups(rng);
    Eigen::VectorXd score(g), succ(g), fail(g), w(g);
    bool degenerate = false;
    for (int i = 0; i < g; ++i) {
      score[i] = i * (1.0 + unif(rng));
      int n = n_per(rng);
      double p = 0.05 + 0.5 * unif(rng);
      int y = 0;
      for (int k = 0; k < n; ++k) y += unif(rng) < p;
      succ[i] = y;
      fail[i] = n - y;
      w[i] = 1.0;
      if (y == 0 || y == n) degenerate = degenerate || (g <= 2);
    }
    if (degenerate) continue;
    DesignMatrix d = intercept_slope(score);
    FittedModel f = fit_binomial_glm(d, succ, fail, w);
    if (f.separation) continue;
    REQUIRE(f.converged);
    oracles::NewtonFit nf = oracles::newton_binomial_fit(d.X, succ, fail, w);
    REQUIRE(nf.converged);
    for (int j = 0; j < 2; ++j) {
      CHECK(f.coefficients[j] == doctest::Approx(nf.beta[j]).epsilon(1e-8));
      CHECK(f.covariance(j, j) ==
            doctest::Approx(nf.covariance(j, j)).epsilon(1e-6));
    }
    ++checked;
  }
  CHECK(checked >= 50);
}

TEST_CASE("score identity and information identity at convergence") {
  Eigen::VectorXd score(4), succ(4), fail(4), w(4);
  score << 0, 1, 2, 4;
  succ << 3, 5, 9, 14;
  fail << 47, 45, 41, 36;
  w << 1.0, 2.0, 0.5, 1.0;
  DesignMatrix d = intercept_slope(score);
  FittedModel f = fit_binomial_glm(d, succ, fail, w);
  REQUIRE(f.converged);

  Eigen::VectorXd colsum = f.score_contributions.colwise().sum();
  CHECK(colsum.lpNorm<Eigen::Infinity>() < 1e-6);

  // covariance^-1 = X' W X with W = w n mu (1-mu); stack rows carry sqrt(W)
  Eigen::MatrixXd info = f.stack_rows.transpose() * f.stack_rows;
  Eigen::MatrixXd prod = info * f.covariance;
  CHECK((prod - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-6);

  // covariance symmetric with nonnegative diagonal
  CHECK((f.covariance - f.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(f.covariance(0, 0) >= 0.0);
  CHECK(f.covariance(1, 1) >= 0.0);
}

TEST_CASE("affine score invariance of the slope z statistic") {
  Eigen::VectorXd score(4), succ(4), fail(4);
  score << 0, 100, 300, 1000;
  succ << 4, 2, 1, 6;
  fail << 46, 48, 49, 44;
  DesignMatrix d1 = intercept_slope(score);
  FittedModel f1 = fit_binomial_glm(d1, succ, fail, ones(4));
  DesignMatrix d2 = intercept_slope((score.array() * 3.7 + 11.0).matrix());
  FittedModel f2 = fit_binomial_glm(d2, succ, fail, ones(4));
  double z1 = f1.coefficients[1] / std::sqrt(f1.covariance(1, 1));
  double z2 = f2.coefficients[1] / std::sqrt(f2.covariance(1, 1));
  CHECK(z1 == doctest::Approx(z2).epsilon(1e-8));
  CHECK(f2.coefficients[1] == doctest::Approx(f1.coefficients[1] / 3.7).epsilon(1e-7));
}

TEST_CASE("monotone proportions give a positive slope") {
  Eigen::VectorXd score(4), succ(4), fail(4);
  score << 0, 1, 2, 3;
  succ << 2, 5, 9, 15;
  fail << 48, 45, 41, 35;
  FittedModel f = fit_binomial_glm(intercept_slope(score), succ, fail, ones(4));
  CHECK(f.coefficients[1] > 0.0);
}

TEST_CASE("pseudo-counts remove separation") {
  // all-or-nothing by dose: raw counts separate, add2 keeps control mu inside (0,1)
  Eigen::VectorXd score(3), succ(3), fail(3);
  score << 0, 1, 2;
  succ << 0, 0, 10;
  fail << 10, 10, 0;
  FittedModel raw = fit_binomial_glm(intercept_slope(score), succ, fail, ones(3));
  CHECK(raw.separation);

  Eigen::VectorXd succ2 = succ.array() + 1.0;
  Eigen::VectorXd fail2 = fail.array() + 1.0;
  FittedModel adj = fit_binomial_glm(intercept_slope(score), succ2, fail2, ones(3));
  CHECK_FALSE(adj.separation);
  double mu0 = 1.0 / (1.0 + std::exp(-adj.coefficients[0]));
  CHECK(mu0 > 0.0);
  CHECK(mu0 < 1.0);
}

TEST_CASE("rank-deficient design throws") {
  DesignMatrix d;
  d.X.resize(4, 3);
  d.X.col(0).setOnes();
  d.X.col(1) << 0, 1, 2, 3;
  d.X.col(2) = 2.0 * d.X.col(1);
  Eigen::VectorXd succ(4), fail(4);
  succ << 1, 2, 3, 4;
  fail << 9, 8, 7, 6;
  CHECK_THROWS_AS(fit_binomial_glm(d, succ, fail, ones(4)), FitError);
}

TEST_CASE("real-valued pseudo counts are accepted verbatim") {
  Eigen::VectorXd score(4), succ(4), fail(4);
  score << 0, 1, 2, 3;
  succ << 2.5, 2.5, 0.5, 6.5;
  fail << 48.5, 48.5, 50.5, 44.5;
  FittedModel f = fit_binomial_glm(intercept_slope(score), succ, fail, ones(4));
  CHECK(f.converged);
  oracles::NewtonFit nf = oracles::newton_binomial_fit(
      intercept_slope(score).X, succ, fail, ones(4));
  CHECK(f.coefficients[1] == doctest::Approx(nf.beta[1]).epsilon(1e-8));
}
