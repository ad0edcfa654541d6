#include "polytrend/sim.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polytrend/errors.hpp"
#include "polytrend/mvnorm.hpp"

namespace polytrend {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t replicate,
                       std::uint64_t stream) {
  key_ = mix64(seed + 0x9e3779b97f4a7c15ull);
  key_ = mix64(key_ ^ (replicate * 0xc2b2ae3d27d4eb4full));
  key_ = mix64(key_ ^ (stream * 0x165667b19e3779f9ull));
}

std::uint64_t CounterRng::next_u64() {
  return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ull);
}

double CounterRng::next_double() {
  return (next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::next_normal() {
  double u = next_double();
  u = std::min(std::max(u, 1e-15), 1.0 - 1e-15);
  return normal_quantile(u);
}

int CounterRng::next_binomial(int n, double p) {
  int x = 0;
  for (int i = 0; i < n; ++i)
    if (next_double() < p) ++x;
  return x;
}

double CounterRng::next_exponential(double rate) {
  double u = std::max(1e-300, 1.0 - next_double());
  return -std::log(u) / rate;
}

std::string to_string(Shape s) {
  switch (s) {
    case Shape::flat: return "flat";
    case Shape::linear_logit: return "linear-logit";
    case Shape::plateau: return "plateau";
    default: return "loglinear";
  }
}

void validate(const Scenario& sc) {
  if (sc.n_studies < 1) throw DataError("scenario: n_studies < 1");
  if (sc.replications < 100) throw DataError("scenario: replications < 100");
  if (!(sc.control_rate > 0.0 && sc.control_rate < 1.0))
    throw DataError("scenario: control_rate outside (0,1)");
  if (static_cast<int>(sc.doses.size()) != sc.n_studies ||
      static_cast<int>(sc.group_sizes.size()) != sc.n_studies)
    throw DataError("scenario: doses/group_sizes must list one vector per study");
  for (int s = 0; s < sc.n_studies; ++s) {
    if (sc.doses[s].size() != sc.group_sizes[s].size())
      throw DataError("scenario: doses and group_sizes disagree in study " +
                      std::to_string(s));
    if (sc.doses[s].size() < 3)
      throw DataError("scenario: fewer than 3 dose levels in study " +
                      std::to_string(s));
    for (int n : sc.group_sizes[s])
      if (n < 1) throw DataError("scenario: group size < 1");
    if (sc.mortality &&
        sc.mortality->hazard_per_dose.size() != sc.doses[s].size())
      throw DataError("scenario: mortality hazards must match dose levels");
  }
  if (sc.sd_intercept < 0.0 || sc.sd_slope < 0.0)
    throw DataError("scenario: negative between-study sd");
}

namespace {

Shape shape_from_string(const std::string& s) {
  if (s == "flat") return Shape::flat;
  if (s == "linear-logit" || s == "linear_logit") return Shape::linear_logit;
  if (s == "plateau") return Shape::plateau;
  if (s == "loglinear") return Shape::loglinear;
  throw DataError("scenario: unknown shape '" + s + "'");
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double tumor_rate(const Scenario& sc, double intercept, double slope, double dose) {
  double eta = intercept;
  switch (sc.shape) {
    case Shape::flat:
      break;
    case Shape::linear_logit:
      eta += slope * dose;
      break;
    case Shape::plateau:
      eta += slope * std::min(dose, sc.plateau_at > 0.0 ? sc.plateau_at : dose);
      break;
    case Shape::loglinear:
      eta += slope * std::log1p(dose);
      break;
  }
  double p = 1.0 / (1.0 + std::exp(-eta));
  return std::min(std::max(p, 1e-9), 1.0 - 1e-9);
}

// one replicate of study data, grouped or animal-level
ScoredDataset generate_replicate(const Scenario& sc, std::uint64_t rep,
                                 Adjustment adjustment,
                                 const ArilogZeroRule& rule) {
  CounterRng study_rng(sc.seed, rep, 0);
  CounterRng count_rng(sc.seed, rep, 1);
  CounterRng death_rng(sc.seed, rep, 2);

  const double a0 = logit(sc.control_rate);
  if (!sc.mortality) {
    std::vector<DoseRecord> rows;
    for (int s = 0; s < sc.n_studies; ++s) {
      double a = a0 + sc.sd_intercept * study_rng.next_normal();
      double b = sc.slope + sc.sd_slope * study_rng.next_normal();
      for (std::size_t j = 0; j < sc.doses[s].size(); ++j) {
        DoseRecord r;
        r.study = "S" + std::to_string(s + 1);
        r.dose = sc.doses[s][j];
        r.at_risk = sc.group_sizes[s][j];
        r.tumor = count_rng.next_binomial(static_cast<int>(r.at_risk),
                                          tumor_rate(sc, a, b, r.dose));
        rows.push_back(std::move(r));
      }
    }
    return compute_dose_scores(rows, adjustment, rule);
  }

  std::vector<AnimalRecord> rows;
  for (int s = 0; s < sc.n_studies; ++s) {
    double a = a0 + sc.sd_intercept * study_rng.next_normal();
    double b = sc.slope + sc.sd_slope * study_rng.next_normal();
    for (std::size_t j = 0; j < sc.doses[s].size(); ++j) {
      double p = tumor_rate(sc, a, b, sc.doses[s][j]);
      double hazard = sc.mortality->hazard_per_dose[j];
      for (int i = 0; i < sc.group_sizes[s][j]; ++i) {
        AnimalRecord r;
        r.study = "S" + std::to_string(s + 1);
        r.dose = sc.doses[s][j];
        r.tumor = count_rng.next_double() < p ? 1 : 0;
        double t = hazard > 0.0 ? death_rng.next_exponential(hazard)
                                : sc.mortality->t_end;
        r.death_time = std::min(t, sc.mortality->t_end);
        rows.push_back(std::move(r));
      }
    }
  }
  return compute_dose_scores(rows, rule);
}

bool replicate_rejects(const ScoredDataset& data, const AnalysisConfig& cfg_in) {
  AnalysisConfig cfg = cfg_in;
  cfg.with_bounds = false;  // rejection needs adjusted p only
  ApproachResult ar = run_approach(data, cfg);
  if (cfg.approach == Approach::fisher) return *ar.fisher_p < cfg.alpha;
  if (ar.joint) return ar.joint->adjusted_p.minCoeff() < cfg.alpha;
  for (const auto& [g, jt] : ar.per_group)
    if (jt.adjusted_p.minCoeff() < cfg.alpha) return true;
  return false;
}

}  // namespace

Scenario scenario_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError(std::string("scenario JSON parse error: ") + e.what());
  }
  Scenario sc;
  try {
    sc.n_studies = j.at("n_studies").get<int>();
    sc.doses = j.at("doses").get<std::vector<std::vector<double>>>();
    sc.group_sizes = j.at("group_sizes").get<std::vector<std::vector<int>>>();
    sc.control_rate = j.at("control_rate").get<double>();
    sc.shape = shape_from_string(j.at("shape").get<std::string>());
    sc.slope = j.value("slope", 0.0);
    sc.plateau_at = j.value("plateau_at", 0.0);
    sc.sd_intercept = j.value("sd_intercept", 0.0);
    sc.sd_slope = j.value("sd_slope", 0.0);
    sc.replications = j.value("replications", 2000);
    sc.seed = j.value("seed", kDefaultSeed);
    if (j.contains("mortality")) {
      MortalitySpec m;
      m.hazard_per_dose = j["mortality"].at("hazard_per_dose").get<std::vector<double>>();
      m.t_end = j["mortality"].value("t_end", 730.0);
      sc.mortality = m;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scenario JSON: ") + e.what());
  }
  validate(sc);
  return sc;
}

SimResult simulate(const Scenario& scenario,
                   const std::vector<AnalysisConfig>& approaches) {
  validate(scenario);
  if (approaches.empty()) throw DataError("simulate: no approaches");

  SimResult out;
  out.replications = scenario.replications;
  out.seed = scenario.seed;
  out.per_approach.resize(approaches.size());
  for (std::size_t a = 0; a < approaches.size(); ++a)
    out.per_approach[a].approach = to_string(approaches[a].approach);

  std::vector<double> total_ms(approaches.size(), 0.0);
  for (int rep = 0; rep < scenario.replications; ++rep) {
    ScoredDataset data;
    try {
      data = generate_replicate(scenario, static_cast<std::uint64_t>(rep),
                                approaches.front().adjustment, {});
      if (scenario.mortality && approaches.front().polyk > 0.0) {
        // rebuild weights on the generated animals
        std::vector<AnimalRecord> recs(data.rows());
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
          recs[i].study = data.study[i];
          recs[i].dose = data.dose[i];
          recs[i].tumor = data.successes[i] > 0.5 ? 1 : 0;
          recs[i].death_time = data.death_time[i];
        }
        data.polyk_weight = compute_polyk_weights(
            recs, approaches.front().polyk, approaches.front().polyk_per_study_tmax);
      }
    } catch (const std::exception&) {
      for (auto& pa : out.per_approach) ++pa.failures;
      continue;
    }
    for (std::size_t a = 0; a < approaches.size(); ++a) {
      auto t0 = std::chrono::steady_clock::now();
      try {
        if (replicate_rejects(data, approaches[a])) ++out.per_approach[a].rejections;
      } catch (const std::exception&) {
        ++out.per_approach[a].failures;
      }
      total_ms[a] += std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    }
  }

  for (std::size_t a = 0; a < approaches.size(); ++a) {
    ApproachRate& pa = out.per_approach[a];
    const int valid = scenario.replications - pa.failures;
    pa.rejection_rate = valid > 0 ? static_cast<double>(pa.rejections) / valid : 0.0;
    pa.standard_error =
        valid > 0 ? std::sqrt(pa.rejection_rate * (1.0 - pa.rejection_rate) / valid)
                  : 0.0;
    pa.mean_ms_per_replicate = total_ms[a] / scenario.replications;
    if (pa.failures > 0.05 * scenario.replications) out.excess_failures = true;
  }
  return out;
}

std::string sim_text(const SimResult& r) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "approach" << std::right << std::setw(10)
     << "reject" << std::setw(10) << "se" << std::setw(10) << "fails"
     << std::setw(12) << "ms/rep" << '\n';
  for (const auto& pa : r.per_approach) {
    os << std::left << std::setw(16) << pa.approach << std::right << std::setw(10)
       << std::fixed << std::setprecision(4) << pa.rejection_rate << std::setw(10)
       << pa.standard_error << std::setw(10) << pa.failures << std::setw(12)
       << std::setprecision(3) << pa.mean_ms_per_replicate << '\n';
  }
  os << "# replications=" << r.replications << " seed=" << r.seed
     << (r.excess_failures ? " EXCESS-FAILURES" : "") << '\n';
  return os.str();
}

}  // namespace polytrend
