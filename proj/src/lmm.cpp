#include "polytrend/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "polytrend/errors.hpp"

namespace polytrend {

namespace {

constexpr double kBigObjective = 1e12;

// Per-group cross products of the sqrt-weight scaled problem.
struct GroupStats {
  Eigen::MatrixXd ZtZ;  // q x q
  Eigen::MatrixXd ZtX;  // q x p
  Eigen::VectorXd Zty;  // q
  Eigen::MatrixXd XtX;  // p x p
  Eigen::VectorXd Xty;  // p
  double yty = 0.0;
};

struct Problem {
  int n = 0, p = 0, q = 0, K = 0;
  std::vector<GroupStats> g;
  Eigen::VectorXd zscale;  // RMS of the scaled Z columns
  RandomEffectsSpec spec;

  // row-level scaled copies, kept for BLUP/eta reconstruction
  Eigen::MatrixXd Xs, Zs;
  Eigen::VectorXd ys;
  std::vector<int> group;
};

Problem build_problem(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                      const std::vector<int>& group, int n_groups,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const RandomEffectsSpec& spec) {
  Problem pr;
  pr.n = static_cast<int>(X.rows());
  pr.p = static_cast<int>(X.cols());
  pr.q = static_cast<int>(Z.cols());
  pr.K = n_groups;
  pr.spec = spec;
  pr.group = group;
  if (pr.q != spec.q()) throw FitError("lmm: Z columns disagree with the random spec");
  if (Z.rows() != pr.n || y.size() != pr.n || w.size() != pr.n ||
      static_cast<int>(group.size()) != pr.n)
    throw FitError("lmm: dimension mismatch");
  for (int i = 0; i < pr.n; ++i) {
    if (group[i] < 0 || group[i] >= n_groups)
      throw FitError("lmm: group index out of range");
    if (w[i] <= 0.0) throw FitError("lmm: nonpositive weight");
  }

  Eigen::VectorXd sw = w.cwiseSqrt();
  pr.Xs = sw.asDiagonal() * X;
  Eigen::MatrixXd Zs_raw = sw.asDiagonal() * Z;
  pr.ys = sw.asDiagonal() * y;

  // unit-RMS scaling of the random design keeps the optimizer coordinates
  // comparable across scorings with very different dose magnitudes
  pr.zscale = Eigen::VectorXd::Ones(pr.q);
  for (int j = 0; j < pr.q; ++j) {
    double rms = std::sqrt(Zs_raw.col(j).squaredNorm() / pr.n);
    pr.zscale[j] = rms > 1e-300 ? rms : 1.0;
  }
  pr.Zs = Zs_raw * pr.zscale.cwiseInverse().asDiagonal();

  pr.g.assign(pr.K, GroupStats{});
  for (auto& gs : pr.g) {
    gs.ZtZ = Eigen::MatrixXd::Zero(pr.q, pr.q);
    gs.ZtX = Eigen::MatrixXd::Zero(pr.q, pr.p);
    gs.Zty = Eigen::VectorXd::Zero(pr.q);
    gs.XtX = Eigen::MatrixXd::Zero(pr.p, pr.p);
    gs.Xty = Eigen::VectorXd::Zero(pr.p);
  }
  for (int i = 0; i < pr.n; ++i) {
    GroupStats& gs = pr.g[group[i]];
    gs.ZtZ.noalias() += pr.Zs.row(i).transpose() * pr.Zs.row(i);
    gs.ZtX.noalias() += pr.Zs.row(i).transpose() * pr.Xs.row(i);
    gs.Zty.noalias() += pr.Zs.row(i).transpose() * pr.ys[i];
    gs.XtX.noalias() += pr.Xs.row(i).transpose() * pr.Xs.row(i);
    gs.Xty.noalias() += pr.Xs.row(i).transpose() * pr.ys[i];
    gs.yty += pr.ys[i] * pr.ys[i];
  }
  return pr;
}

int theta_dim(const RandomEffectsSpec& spec) {
  int q = spec.q();
  return spec.structure == RandomEffectsSpec::Structure::unstructured
             ? q * (q + 1) / 2
             : q;
}

// theta -> Lambda (lower triangular relative Cholesky factor); diagonal
// entries live on the log scale.
Eigen::MatrixXd theta_to_lambda(const Eigen::VectorXd& theta,
                                const RandomEffectsSpec& spec) {
  const int q = spec.q();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(q, q);
  int k = 0;
  if (spec.structure == RandomEffectsSpec::Structure::unstructured) {
    for (int j = 0; j < q; ++j)
      for (int i = j; i < q; ++i) {
        L(i, j) = (i == j) ? std::exp(theta[k]) : theta[k];
        ++k;
      }
  } else {
    for (int j = 0; j < q; ++j) L(j, j) = std::exp(theta[k++]);
  }
  return L;
}

struct Evaluation {
  double objective = kBigObjective;
  bool ok = false;
  Eigen::VectorXd beta;
  Eigen::MatrixXd A;  // X' (V/sigma2)^-1 X on the scaled problem
  double r2 = 0.0;
  double logdet = 0.0;
  Eigen::MatrixXd lambda;
};

Evaluation evaluate(const Problem& pr, const Eigen::VectorXd& theta) {
  Evaluation ev;
  for (int k = 0; k < theta.size(); ++k)
    if (!std::isfinite(theta[k]) || std::fabs(theta[k]) > 40.0) return ev;

  const Eigen::MatrixXd L = theta_to_lambda(theta, pr.spec);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(pr.p, pr.p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(pr.p);
  double c = 0.0, logdet = 0.0;

  for (const GroupStats& gs : pr.g) {
    Eigen::MatrixXd M =
        L.transpose() * gs.ZtZ * L + Eigen::MatrixXd::Identity(pr.q, pr.q);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) return ev;
    Eigen::MatrixXd Lm = llt.matrixL();
    Eigen::VectorXd cu = Lm.triangularView<Eigen::Lower>().solve(L.transpose() * gs.Zty);
    Eigen::MatrixXd CX = Lm.triangularView<Eigen::Lower>().solve(L.transpose() * gs.ZtX);
    A.noalias() += gs.XtX - CX.transpose() * CX;
    b.noalias() += gs.Xty - CX.transpose() * cu;
    c += gs.yty - cu.squaredNorm();
    for (int i = 0; i < pr.q; ++i) logdet += 2.0 * std::log(Lm(i, i));
  }

  Eigen::LLT<Eigen::MatrixXd> lltA(A);
  if (lltA.info() != Eigen::Success) return ev;
  Eigen::VectorXd beta = lltA.solve(b);
  double r2 = c - beta.dot(b);
  if (!(r2 > 0.0)) return ev;

  double logdet_A = 0.0;
  Eigen::MatrixXd LA = lltA.matrixL();
  for (int i = 0; i < pr.p; ++i) logdet_A += 2.0 * std::log(LA(i, i));

  ev.objective = logdet + logdet_A + (pr.n - pr.p) * std::log(r2);
  ev.ok = std::isfinite(ev.objective);
  if (!ev.ok) {
    ev.objective = kBigObjective;
    return ev;
  }
  ev.beta = beta;
  ev.A = A;
  ev.r2 = r2;
  ev.logdet = logdet;
  ev.lambda = L;
  return ev;
}

// Standard Nelder-Mead; small dimension (<= 4).
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& start, double step,
                            double tol, int max_eval, bool* converged) {
  const int m = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> x(m + 1, start);
  std::vector<double> fx(m + 1);
  for (int i = 0; i < m; ++i) x[i + 1][i] += step;
  int evals = 0;
  for (int i = 0; i <= m; ++i) fx[i] = (++evals, f(x[i]));

  auto order = [&] {
    for (int i = 1; i <= m; ++i)
      for (int j = i; j > 0 && fx[j] < fx[j - 1]; --j) {
        std::swap(fx[j], fx[j - 1]);
        std::swap(x[j], x[j - 1]);
      }
  };
  order();

  while (evals < max_eval) {
    double size = 0.0;
    for (int i = 1; i <= m; ++i)
      size = std::max(size, (x[i] - x[0]).lpNorm<Eigen::Infinity>());
    if (std::fabs(fx[m] - fx[0]) < tol * (std::fabs(fx[0]) + tol) && size < 1e-7)
      break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) centroid += x[i];
    centroid /= m;

    Eigen::VectorXd xr = centroid + (centroid - x[m]);
    double fr = (++evals, f(xr));
    if (fr < fx[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - x[m]);
      double fe = (++evals, f(xe));
      if (fe < fr) { x[m] = xe; fx[m] = fe; }
      else { x[m] = xr; fx[m] = fr; }
    } else if (fr < fx[m - 1]) {
      x[m] = xr; fx[m] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (x[m] - centroid);
      double fc = (++evals, f(xc));
      if (fc < fx[m]) { x[m] = xc; fx[m] = fc; }
      else {
        for (int i = 1; i <= m; ++i) {
          x[i] = x[0] + 0.5 * (x[i] - x[0]);
          fx[i] = (++evals, f(x[i]));
        }
      }
    }
    order();
  }
  if (converged) *converged = evals < max_eval;
  return x[0];
}

// Cyclic coordinate-wise parabolic refinement: tightens the simplex optimum
// to near machine precision on the smooth REML surface.
Eigen::VectorXd polish(const std::function<double(const Eigen::VectorXd&)>& f,
                       Eigen::VectorXd theta, double* fbest) {
  const int m = static_cast<int>(theta.size());
  double f0 = f(theta);
  double h = 0.05;
  for (int cycle = 0; cycle < 40 && h > 1e-9; ++cycle) {
    bool moved = false;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      double fp = f(tp), fm = f(tm);
      if (fp < f0 || fm < f0) {
        if (fp < fm) { theta = tp; f0 = fp; }
        else { theta = tm; f0 = fm; }
        moved = true;
        continue;
      }
      double denom = fp - 2.0 * f0 + fm;
      if (denom > 0.0) {
        double delta = 0.5 * h * (fm - fp) / denom;
        delta = std::min(std::max(delta, -h), h);
        Eigen::VectorXd tc = theta;
        tc[j] += delta;
        double fc = f(tc);
        if (fc < f0) {
          theta = tc;
          f0 = fc;
          moved = true;
        }
      }
    }
    if (!moved) h *= 0.25;
  }
  if (fbest) *fbest = f0;
  return theta;
}

MixedFit extract_fit(const Problem& pr, const Eigen::VectorXd& theta,
                     const Evaluation& ev) {
  MixedFit fit;
  fit.theta = theta;
  fit.reml_objective = ev.objective;
  if (!ev.ok) return fit;

  const int dof = std::max(1, pr.n - pr.p);
  fit.sigma2 = ev.r2 / dof;
  fit.fixed_effects = ev.beta;
  Eigen::LLT<Eigen::MatrixXd> lltA(ev.A);
  fit.fixed_covariance =
      fit.sigma2 * lltA.solve(Eigen::MatrixXd::Identity(pr.p, pr.p));
  fit.fixed_covariance =
      0.5 * (fit.fixed_covariance + fit.fixed_covariance.transpose()).eval();

  // G on the original (unscaled) random-effects coordinates
  Eigen::MatrixXd Dinv = pr.zscale.cwiseInverse().asDiagonal();
  Eigen::MatrixXd LL = ev.lambda * ev.lambda.transpose();
  fit.G = fit.sigma2 * Dinv * LL * Dinv;
  fit.G = 0.5 * (fit.G + fit.G.transpose()).eval();

  // BLUPs: u_g = (L' ZtZ_g L + I)^-1 L' (Zty_g - ZtX_g beta); b = D^-1 L u
  fit.blups = Eigen::MatrixXd::Zero(pr.K, pr.q);
  for (int g = 0; g < pr.K; ++g) {
    const GroupStats& gs = pr.g[g];
    Eigen::MatrixXd M = ev.lambda.transpose() * gs.ZtZ * ev.lambda +
                        Eigen::MatrixXd::Identity(pr.q, pr.q);
    Eigen::VectorXd rhs = ev.lambda.transpose() * (gs.Zty - gs.ZtX * ev.beta);
    Eigen::VectorXd u = M.llt().solve(rhs);
    fit.blups.row(g) = (Dinv * ev.lambda * u).transpose();
  }

  fit.eta = Eigen::VectorXd::Zero(pr.n);
  fit.converged = true;
  return fit;
}

void fill_eta(MixedFit& fit, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
              const std::vector<int>& group) {
  fit.eta = X * fit.fixed_effects;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    fit.eta[i] += Z.row(i).dot(fit.blups.row(group[i]));
}

}  // namespace

MixedFit fit_lmm_at_theta(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                          const std::vector<int>& group, int n_groups,
                          const Eigen::VectorXd& y,
                          const Eigen::VectorXd& weights,
                          const RandomEffectsSpec& spec,
                          const Eigen::VectorXd& theta) {
  Problem pr = build_problem(X, Z, group, n_groups, y, weights, spec);
  Evaluation ev = evaluate(pr, theta);
  if (!ev.ok) throw FitError("fit_lmm_at_theta: objective undefined at theta");
  MixedFit fit = extract_fit(pr, theta, ev);
  fill_eta(fit, X, Z, group);
  return fit;
}

MixedFit fit_lmm_reml(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                      const std::vector<int>& group, int n_groups,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                      const RandomEffectsSpec& spec,
                      const Eigen::VectorXd* warm_theta) {
  if (n_groups < 2) throw FitError("fit_lmm_reml: need >= 2 groups");
  Problem pr = build_problem(X, Z, group, n_groups, y, weights, spec);
  const int m = theta_dim(spec);

  auto objective = [&pr](const Eigen::VectorXd& th) {
    return evaluate(pr, th).objective;
  };

  std::vector<Eigen::VectorXd> starts;
  if (warm_theta && warm_theta->size() == m) {
    starts.push_back(*warm_theta);
  } else {
    starts.push_back(Eigen::VectorXd::Zero(m));
    Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
    s.array() -= 2.0;  // small variance components
    starts.push_back(s);
  }

  bool any_ok = false;
  double best_f = kBigObjective;
  Eigen::VectorXd best_theta = Eigen::VectorXd::Zero(m);
  auto consider = [&](const Eigen::VectorXd& cand, double f) {
    if (f < best_f) {
      best_f = f;
      best_theta = cand;
      any_ok = f < kBigObjective;
    }
  };
  for (const Eigen::VectorXd& s : starts) {
    bool conv = false;
    Eigen::VectorXd th = nelder_mead(objective, s, 0.5, 1e-10, 800, &conv);
    double fth = kBigObjective;
    th = polish(objective, th, &fth);
    consider(th, fth);
  }
  // one restart from a perturbed optimum
  {
    bool conv = false;
    Eigen::VectorXd th2 = nelder_mead(
        objective, best_theta + Eigen::VectorXd::Constant(m, 0.25), 0.25, 1e-10,
        800, &conv);
    double f2 = kBigObjective;
    th2 = polish(objective, th2, &f2);
    consider(th2, f2);
  }
  if (!any_ok) throw FitError("fit_lmm_reml: variance-component search failed");

  Evaluation ev = evaluate(pr, best_theta);
  MixedFit fit = extract_fit(pr, best_theta, ev);
  fit.converged = ev.ok;
  fill_eta(fit, X, Z, group);
  return fit;
}

MixedFit fit_binomial_pql(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                          const std::vector<int>& group, int n_groups,
                          const Eigen::VectorXd& successes,
                          const Eigen::VectorXd& failures,
                          const Eigen::VectorXd& prior_weights,
                          const RandomEffectsSpec& spec, int max_outer,
                          double tol) {
  if (n_groups < 2) throw FitError("fit_binomial_pql: need >= 2 groups");
  const Eigen::Index n = X.rows();
  const Eigen::VectorXd ntot = successes + failures;

  DesignMatrix d0{X, {}};
  FittedModel glm0 = fit_binomial_glm(d0, successes, failures, prior_weights);
  Eigen::VectorXd eta = X * glm0.coefficients;

  MixedFit fit;
  Eigen::VectorXd warm;
  bool have_warm = false;
  int outer = 0;
  bool outer_converged = false;
  Eigen::VectorXd z(n), W(n);
  for (; outer < max_outer; ++outer) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double mu = 1.0 / (1.0 + std::exp(-eta[i]));
      mu = std::min(std::max(mu, 1e-10), 1.0 - 1e-10);
      z[i] = eta[i] + (successes[i] - ntot[i] * mu) / (ntot[i] * mu * (1.0 - mu));
      W[i] = prior_weights[i] * ntot[i] * mu * (1.0 - mu);
    }
    fit = fit_lmm_reml(X, Z, group, n_groups, z, W, spec,
                       have_warm ? &warm : nullptr);
    warm = fit.theta;
    have_warm = true;

    double num = (fit.eta - eta).cwiseAbs().maxCoeff();
    double den = std::max(1e-10, fit.eta.cwiseAbs().maxCoeff());
    eta = fit.eta;
    if (num / den < tol) {
      outer_converged = true;
      ++outer;
      break;
    }
  }
  fit.pql_iterations = outer;
  fit.converged = fit.converged && outer_converged;
  fit.working_response = z;
  fit.working_weights = W;
  return fit;
}

FittedModel mixed_to_fixed(const MixedFit& fit, const Eigen::MatrixXd& X,
                           const RandomEffectsSpec& spec,
                           const std::vector<std::string>& labels) {
  if (!fit.converged) throw FitError("mixed_to_fixed: fit not converged");
  if (fit.working_response.size() != X.rows())
    throw FitError("mixed_to_fixed: fit carries no working state for this X");
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();

  FittedModel out;
  out.labels = labels;
  out.coefficients = fit.fixed_effects;
  out.covariance = fit.fixed_covariance;
  out.converged = true;
  out.iterations = fit.pql_iterations;

  // working residuals net of the random-effect prediction
  Eigen::VectorXd resid = fit.working_response - fit.eta;
  Eigen::MatrixXd psi =
      (fit.working_weights.array() * resid.array()).matrix().asDiagonal() * X;

  // whiten: psi~ = psi M' with M = chol(J) chol(S)^-1 so that the Gram of
  // the contributions equals the information J = fixed_covariance^-1
  Eigen::MatrixXd J = fit.fixed_covariance.llt().solve(Eigen::MatrixXd::Identity(p, p));
  J = 0.5 * (J + J.transpose()).eval();
  Eigen::MatrixXd S = psi.transpose() * psi;
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> lltS(S), lltJ(J);
  if (lltS.info() == Eigen::Success && lltJ.info() == Eigen::Success) {
    Eigen::MatrixXd LS = lltS.matrixL();
    Eigen::MatrixXd LJ = lltJ.matrixL();
    Eigen::MatrixXd M = LJ * LS.triangularView<Eigen::Lower>()
                                 .solve(Eigen::MatrixXd::Identity(p, p));
    out.score_contributions = psi * M.transpose();
  } else {
    // degenerate residual pattern: fall back to information-root rows
    Eigen::MatrixXd LJ = lltJ.matrixL();
    out.score_contributions = Eigen::MatrixXd::Zero(n, p);
    out.score_contributions.topRows(p) = LJ.transpose();
  }
  out.stack_rows = out.score_contributions;
  out.residual_df =
      static_cast<double>(n) - static_cast<double>(p) - spec.n_variance_params();
  out.deviance = std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace polytrend
