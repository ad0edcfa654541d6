#include "oracles.hpp"

#include <cmath>

#include "polytrend/mvnorm.hpp"

namespace oracles {

double newton_minus2_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& succ,
                            const Eigen::VectorXd& fail,
                            const Eigen::VectorXd& weights,
                            const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double eta = X.row(i).dot(beta);
    double mu = 1.0 / (1.0 + std::exp(-eta));
    mu = std::min(std::max(mu, 1e-14), 1.0 - 1e-14);
    if (succ[i] > 0.0) ll += weights[i] * succ[i] * std::log(mu);
    if (fail[i] > 0.0) ll += weights[i] * fail[i] * std::log(1.0 - mu);
  }
  return -2.0 * ll;
}

NewtonFit newton_binomial_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& succ,
                              const Eigen::VectorXd& fail,
                              const Eigen::VectorXd& weights) {
  const Eigen::Index n = X.rows(), p = X.cols();
  NewtonFit out;

  // start from the empirical-logit least squares fit
  Eigen::VectorXd elogit(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double ntot = succ[i] + fail[i];
    double prop = (succ[i] + 0.5) / (ntot + 1.0);
    elogit[i] = std::log(prop / (1.0 - prop));
  }
  Eigen::VectorXd beta = X.fullPivLu().solve(elogit);

  double obj = newton_minus2_loglik(X, succ, fail, weights, beta);
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      double eta = X.row(i).dot(beta);
      double mu = 1.0 / (1.0 + std::exp(-eta));
      mu = std::min(std::max(mu, 1e-14), 1.0 - 1e-14);
      double ntot = succ[i] + fail[i];
      g += weights[i] * (succ[i] - ntot * mu) * X.row(i).transpose();
      H += weights[i] * ntot * mu * (1.0 - mu) * X.row(i).transpose() * X.row(i);
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd step = H.fullPivLu().solve(g);
    double t = 1.0;
    Eigen::VectorXd cand = beta + step;
    double cobj = newton_minus2_loglik(X, succ, fail, weights, cand);
    int back = 0;
    while (cobj > obj + 1e-12 && back < 50) {
      t *= 0.5;
      cand = beta + t * step;
      cobj = newton_minus2_loglik(X, succ, fail, weights, cand);
      ++back;
    }
    beta = cand;
    obj = cobj;
  }
  out.beta = beta;

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = X.row(i).dot(beta);
    double mu = 1.0 / (1.0 + std::exp(-eta));
    double ntot = succ[i] + fail[i];
    H += weights[i] * ntot * mu * (1.0 - mu) * X.row(i).transpose() * X.row(i);
  }
  out.covariance = H.fullPivLu().inverse();
  return out;
}

double exchangeable_rectangle(double upper, double rho, int dim) {
  if (rho == 0.0) return std::pow(polytrend::normal_cdf(upper), dim);
  const double sr = std::sqrt(rho);
  const double s1 = std::sqrt(1.0 - rho);
  const int n = 4000;  // Simpson on [-10, 10]
  const double a = -10.0, b = 10.0, h = (b - a) / n;
  auto f = [&](double t) {
    return polytrend::normal_pdf(t) *
           std::pow(polytrend::normal_cdf((upper - sr * t) / s1), dim);
  };
  double sum = f(a) + f(b);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * h / 3.0;
}

AnovaReml anova_reml(const std::vector<std::vector<double>>& groups) {
  const int K = static_cast<int>(groups.size());
  const int m = static_cast<int>(groups[0].size());
  double grand = 0.0;
  std::vector<double> means(K, 0.0);
  for (int g = 0; g < K; ++g) {
    for (double v : groups[g]) means[g] += v;
    means[g] /= m;
    grand += means[g];
  }
  grand /= K;
  double ssb = 0.0, ssw = 0.0;
  for (int g = 0; g < K; ++g) {
    ssb += m * (means[g] - grand) * (means[g] - grand);
    for (double v : groups[g]) ssw += (v - means[g]) * (v - means[g]);
  }
  double msb = ssb / (K - 1);
  double msw = ssw / (K * (m - 1));
  return {msw, std::max(0.0, (msb - msw) / m), grand};
}

std::string validate_schema(const nlohmann::json& value, const nlohmann::json& schema,
                            const std::string& where) {
  if (schema.contains("type")) {
    const std::string t = schema["type"];
    bool ok = (t == "object" && value.is_object()) ||
              (t == "array" && value.is_array()) ||
              (t == "string" && value.is_string()) ||
              (t == "number" && value.is_number()) ||
              (t == "integer" && value.is_number_integer()) ||
              (t == "boolean" && value.is_boolean());
    if (!ok) return where + ": expected type " + t;
  }
  if (schema.contains("enum")) {
    bool hit = false;
    for (const auto& e : schema["enum"])
      if (e == value) hit = true;
    if (!hit) return where + ": value not in enum";
  }
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& r : schema["required"])
        if (!value.contains(r.get<std::string>()))
          return where + ": missing required key '" + r.get<std::string>() + "'";
    if (schema.contains("properties")) {
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (schema["properties"].contains(it.key())) {
          std::string err = validate_schema(it.value(), schema["properties"][it.key()],
                                            where + "." + it.key());
          if (!err.empty()) return err;
        } else if (schema.value("additionalProperties", true) == false) {
          return where + ": unexpected key '" + it.key() + "'";
        }
      }
    }
    if (schema.contains("patternProperties")) {
      // single catch-all pattern is enough for our schemas
      const auto& pp = schema["patternProperties"];
      for (auto it = value.begin(); it != value.end(); ++it) {
        for (auto ps = pp.begin(); ps != pp.end(); ++ps) {
          std::string err =
              validate_schema(it.value(), ps.value(), where + "." + it.key());
          if (!err.empty()) return err;
        }
      }
    }
  }
  if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      std::string err = validate_schema(value[i], schema["items"],
                                        where + "[" + std::to_string(i) + "]");
      if (!err.empty()) return err;
    }
  }
  return "";
}

namespace {

std::vector<polytrend::DoseRecord> make_records(
    const std::vector<std::tuple<std::string, std::string, double, long, long,
                                 std::string>>& rows) {
  std::vector<polytrend::DoseRecord> out;
  for (const auto& [study, stratum, dose, tumor, at_risk, ws] : rows) {
    polytrend::DoseRecord r;
    r.study = study;
    r.stratum = stratum;
    r.dose = dose;
    r.tumor = tumor;
    r.at_risk = at_risk;
    r.wscore = ws;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<polytrend::DoseRecord> lmice_records() {
  return make_records({
      {"A", "", 0, 2, 48, "C"},     {"A", "", 157, 5, 49, "D1"},
      {"A", "", 814, 4, 50, "D2"},  {"A", "", 4841, 2, 49, "D2"},
      {"B", "", 0, 4, 50, "C"},     {"B", "", 100, 2, 50, "D1"},
      {"B", "", 300, 1, 50, "D2"},  {"B", "", 1000, 6, 50, "D2"},
      {"C", "", 0, 2, 50, "C"},     {"C", "", 165, 2, 50, "D1"},
      {"C", "", 838, 0, 50, "D2"},  {"C", "", 4348, 6, 50, "D2"},
      {"D", "", 0, 0, 51, "C"},     {"D", "", 71, 1, 51, "D1"},
      {"D", "", 234, 2, 51, "D2"},  {"D", "", 810, 5, 51, "D3"},
  });
}

std::vector<polytrend::DoseRecord> nmice_records() {
  return make_records({
      {"Ex1", "m", 0, 8, 50, ""},    {"Ex1", "m", 98, 8, 50, ""},
      {"Ex1", "m", 299, 10, 50, ""}, {"Ex1", "m", 1081, 11, 45, ""},
      {"Ex1", "f", 0, 11, 40, ""},   {"Ex1", "f", 15, 20, 40, ""},
      {"Ex1", "f", 151, 19, 35, ""}, {"Ex1", "f", 1460, 19, 30, ""},
      {"Ex2", "m", 0, 4, 60, ""},    {"Ex2", "m", 153, 4, 60, ""},
      {"Ex2", "m", 787, 8, 60, ""},  {"Ex2", "m", 2116, 7, 50, ""},
      {"Ex2", "f", 0, 8, 25, ""},    {"Ex2", "f", 100, 12, 25, ""},
      {"Ex2", "f", 300, 9, 20, ""},  {"Ex2", "f", 1000, 10, 20, ""},
  });
}

}  // namespace oracles
