#include "polytrend/mvnorm.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace polytrend {

// ---------------------------------------------------------------------
// Scalar distributions
// ---------------------------------------------------------------------

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Acklam's rational approximation refined by one Halley step.
double normal_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("normal_quantile: p outside [0,1]");
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;

  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the erfc-based CDF.
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

// Regularized incomplete gamma, series + continued fraction (Lentz).
double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0)
    throw std::invalid_argument("gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  const double lga = std::lgamma(a);
  if (x < a + 1.0) {
    // series for P(a,x)
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lga);
  }
  // continued fraction for Q(a,x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  double q = std::exp(-x + a * std::log(x) - lga) * h;
  return 1.0 - q;
}

double chisq_upper_tail(double x, double df) {
  if (df <= 0.0) throw std::invalid_argument("chisq_upper_tail: df <= 0");
  if (x < 0.0) throw std::invalid_argument("chisq_upper_tail: x < 0");
  return 1.0 - gamma_p(0.5 * df, 0.5 * x);
}

double chisq_quantile(double p, double df) {
  if (df <= 0.0) throw std::invalid_argument("chisq_quantile: df <= 0");
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("chisq_quantile: p outside (0,1)");
  // Wilson-Hilferty start, then Newton on the lower tail.
  double z = normal_quantile(p);
  double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  double x = df * t * t * t;
  if (x <= 0.0) x = 0.5 * df * std::pow(p, 1.0 / (0.5 * df));
  for (int it = 0; it < 60; ++it) {
    double f = gamma_p(0.5 * df, 0.5 * x) - p;
    double dens = 0.5 * std::exp((0.5 * df - 1.0) * std::log(0.5 * x) - 0.5 * x -
                                 std::lgamma(0.5 * df));
    if (dens <= 0.0) break;
    double step = f / dens;
    double xn = x - step;
    if (xn <= 0.0) xn = 0.5 * x;
    if (std::fabs(xn - x) < 1e-12 * (x + 1.0)) {
      x = xn;
      break;
    }
    x = xn;
  }
  return x;
}

// ---------------------------------------------------------------------
// Genz QMC rectangle probabilities
// ---------------------------------------------------------------------

namespace {

// splitmix64: used for the random batch shifts
std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double uniform01(std::uint64_t& s) {
  return (splitmix64(s) >> 11) * 0x1.0p-53;
}

// Korobov lattice sizes (primes) and a deterministic search for the
// generating exponent minimizing the P2 worst-case criterion.
const int kLatticeSizes[] = {127, 521, 2053, 8191, 32771, 131071};

int korobov_exponent(int N, int dim) {
  static std::map<std::pair<int, int>, int> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto key = std::make_pair(N, dim);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  std::uint64_t state = 0x9d2c5680f00dull ^ static_cast<std::uint64_t>(N) ^
                        (static_cast<std::uint64_t>(dim) << 32);
  double best = std::numeric_limits<double>::infinity();
  int best_a = 2;
  const double two_pi2 = 19.739208802178716;
  std::vector<long long> z(dim);
  for (int cand = 0; cand < 160; ++cand) {
    int a = 2 + static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(N - 3));
    z[0] = 1;
    for (int j = 1; j < dim; ++j) z[j] = (z[j - 1] * a) % N;
    double P = 0.0;
    for (int k = 0; k < N; ++k) {
      double prod = 1.0;
      for (int j = 0; j < dim; ++j) {
        double x = static_cast<double>((k * z[j]) % N) / N;
        prod *= 1.0 + two_pi2 * (x * x - x + 1.0 / 6.0);
      }
      P += prod;
    }
    P = P / N - 1.0;
    if (P < best) {
      best = P;
      best_a = a;
    }
  }
  cache[key] = best_a;
  return best_a;
}

struct Factorization {
  Eigen::MatrixXd L;  // lower Cholesky of (possibly ridged) R
  bool regularized = false;
};

Factorization factor_correlation(const Eigen::MatrixXd& R) {
  const auto d = R.rows();
  if (R.cols() != d) throw std::invalid_argument("mvn: R not square");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::fabs(R(i, i) - 1.0) > 1e-8)
      throw std::invalid_argument("mvn: R diagonal not 1");
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::fabs(R(i, j) - R(j, i)) > 1e-8)
        throw std::invalid_argument("mvn: R not symmetric");
  }
  Factorization out;
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() == Eigen::Success) {
    out.L = llt.matrixL();
    return out;
  }
  Eigen::MatrixXd Rr = R;
  Rr.diagonal().array() += 1e-10;
  Eigen::LLT<Eigen::MatrixXd> llt2(Rr);
  if (llt2.info() != Eigen::Success) {
    // final fallback for strongly singular R (e.g. duplicated coordinates)
    Rr.diagonal().array() += 1e-8;
    llt2.compute(Rr);
    if (llt2.info() != Eigen::Success)
      throw std::invalid_argument("mvn: R not positive semidefinite");
  }
  out.L = llt2.matrixL();
  out.regularized = true;
  return out;
}

// One Genz-transformed integrand evaluation.  w has qmc_dim entries in
// [0,1); for the t version the first entry drives the chi draw.
double genz_point(const Eigen::MatrixXd& L, const Eigen::VectorXd& lo,
                  const Eigen::VectorXd& hi, const double* w, double df,
                  double chi_scale_u) {
  const int d = static_cast<int>(L.rows());
  double scale = 1.0;
  if (df > 0.0) {
    double s = chisq_quantile(std::min(std::max(chi_scale_u, 1e-15), 1.0 - 1e-15), df);
    scale = std::sqrt(s / df);
  }
  std::array<double, 16> y{};
  double prob = 1.0;
  for (int i = 0; i < d; ++i) {
    double shift = 0.0;
    for (int j = 0; j < i; ++j) shift += L(i, j) * y[j];
    const double cii = std::max(L(i, i), 1e-100);
    double a = lo[i] == -kInf ? -kInf : (lo[i] * scale - shift) / cii;
    double b = hi[i] == kInf ? kInf : (hi[i] * scale - shift) / cii;
    const double da = a == -kInf ? 0.0 : normal_cdf(a);
    const double db = b == kInf ? 1.0 : normal_cdf(b);
    const double width = db - da;
    if (width <= 0.0) return 0.0;
    prob *= width;
    if (i + 1 < d) {
      double t = da + w[i] * width;
      t = std::min(std::max(t, 1e-15), 1.0 - 1e-15);
      y[i] = normal_quantile(t);
    }
  }
  return prob;
}

MvnResult rectangle_impl(const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper,
                         const Eigen::MatrixXd& R, double df, double accuracy,
                         std::uint64_t seed) {
  const int d = static_cast<int>(R.rows());
  if (d < 1 || d > 10)
    throw std::invalid_argument("mvn: dimension must be in [1,10]");
  if (lower.size() != d || upper.size() != d)
    throw std::invalid_argument("mvn: limit dimensions disagree with R");
  for (int i = 0; i < d; ++i)
    if (lower[i] > upper[i])
      throw std::invalid_argument("mvn: lower > upper");

  Factorization fac = factor_correlation(R);
  MvnResult res;
  res.regularized = fac.regularized;

  // Univariate normal needs no integration.
  const bool is_t = df > 0.0;
  const int qmc_dim = (d - 1) + (is_t ? 1 : 0);
  if (qmc_dim == 0) {
    double da = lower[0] == -kInf ? 0.0 : normal_cdf(lower[0]);
    double db = upper[0] == kInf ? 1.0 : normal_cdf(upper[0]);
    res.value = std::max(0.0, db - da);
    res.error = 0.0;
    return res;
  }

  const int nbatch = 12;
  std::uint64_t state = seed ^ 0x5dfa23c1b7a9471ull;
  std::vector<std::array<double, 16>> shifts(nbatch);
  for (int b = 0; b < nbatch; ++b)
    for (int k = 0; k < qmc_dim; ++k) shifts[b][k] = uniform01(state);

  double value = 0.0, err = kInf;
  for (int level = 0; level < static_cast<int>(std::size(kLatticeSizes)); ++level) {
    const int N = kLatticeSizes[level];
    const int a = korobov_exponent(N, qmc_dim);
    double gen[16];
    long long zj = 1;
    for (int j = 0; j < qmc_dim; ++j) {
      gen[j] = static_cast<double>(zj) / N;
      zj = (zj * a) % N;
    }
    double mean_sum = 0.0, sq_sum = 0.0;
    for (int b = 0; b < nbatch; ++b) {
      double acc = 0.0;
      double v[16];
      for (int j = 0; j < qmc_dim; ++j) v[j] = shifts[b][j];
      for (int k = 0; k < N; ++k) {
        double w[16];
        for (int j = 0; j < qmc_dim; ++j) {
          w[j] = 1.0 - std::fabs(2.0 * v[j] - 1.0);  // tent transform
          v[j] += gen[j];
          if (v[j] >= 1.0) v[j] -= 1.0;
        }
        const double* winner = is_t ? w + 1 : w;
        double u0 = is_t ? w[0] : 0.0;
        acc += genz_point(fac.L, lower, upper, winner, is_t ? df : 0.0, u0);
      }
      double m = acc / N;
      mean_sum += m;
      sq_sum += m * m;
    }
    value = mean_sum / nbatch;
    double var = std::max(0.0, (sq_sum - nbatch * value * value) / (nbatch - 1.0));
    err = 3.0 * std::sqrt(var / nbatch);
    if (err <= accuracy) break;
  }
  res.value = std::min(1.0, std::max(0.0, value));
  res.error = err;
  res.reliable = err <= accuracy;
  return res;
}

}  // namespace

MvnResult mvn_rectangle(const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper,
                        const Eigen::MatrixXd& R, double accuracy,
                        std::uint64_t seed) {
  return rectangle_impl(lower, upper, R, 0.0, accuracy, seed);
}

MvnResult mvt_rectangle(const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper,
                        const Eigen::MatrixXd& R, double df, double accuracy,
                        std::uint64_t seed) {
  if (df <= 0.0) throw std::invalid_argument("mvt: df <= 0");
  return rectangle_impl(lower, upper, R, df, accuracy, seed);
}

namespace {

double equi_quantile_impl(const Eigen::MatrixXd& R, double prob, double df,
                          double accuracy, std::uint64_t seed) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("equicoordinate_quantile: prob outside (0,1)");
  const int d = static_cast<int>(R.rows());
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(d, -kInf);
  auto eval = [&](double c) {
    Eigen::VectorXd upper = Eigen::VectorXd::Constant(d, c);
    return df > 0.0 ? mvt_rectangle(lower, upper, R, df, accuracy, seed).value
                    : mvn_rectangle(lower, upper, R, accuracy, seed).value;
  };
  // Perfect dependence gives the univariate quantile; independence gives
  // the prob^(1/d) quantile.  Pad the bracket and expand if needed.
  double lo = normal_quantile(prob) - 0.5;
  double hi = normal_quantile(std::pow(prob, 1.0 / d)) + 0.5;
  if (df > 0.0) hi += 6.0;  // heavier t tails
  double flo = eval(lo) - prob;
  double fhi = eval(hi) - prob;
  int guard = 0;
  while (flo > 0.0 && guard++ < 60) {
    lo -= 1.0;
    flo = eval(lo) - prob;
  }
  guard = 0;
  while (fhi < 0.0 && guard++ < 60) {
    hi += 1.0;
    fhi = eval(hi) - prob;
  }
  if (!(flo <= 0.0 && fhi >= 0.0))
    throw std::runtime_error("equicoordinate_quantile: bracket failure");

  // safeguarded secant: falls back to bisection when the secant step stalls
  for (int it = 0; it < 60 && hi - lo > 2e-6; ++it) {
    double mid;
    if (fhi - flo > 1e-300) {
      mid = hi - fhi * (hi - lo) / (fhi - flo);
      double margin = 0.05 * (hi - lo);
      if (!(mid > lo + margin && mid < hi - margin)) mid = 0.5 * (lo + hi);
    } else {
      mid = 0.5 * (lo + hi);
    }
    double fmid = eval(mid) - prob;
    if (fmid < 0.0) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
      fhi = fmid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double equicoordinate_quantile(const Eigen::MatrixXd& R, double prob,
                               double accuracy, std::uint64_t seed) {
  return equi_quantile_impl(R, prob, 0.0, accuracy, seed);
}

double equicoordinate_quantile_t(const Eigen::MatrixXd& R, double prob,
                                 double df, double accuracy,
                                 std::uint64_t seed) {
  if (df <= 0.0) throw std::invalid_argument("equicoordinate_quantile_t: df <= 0");
  return equi_quantile_impl(R, prob, df, accuracy, seed);
}

}  // namespace polytrend
