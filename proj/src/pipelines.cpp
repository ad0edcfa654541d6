#include "polytrend/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "polytrend/errors.hpp"
#include "polytrend/version.hpp"

namespace polytrend {

std::string to_string(Approach a) {
  switch (a) {
    case Approach::mixed: return "mixed";
    case Approach::per_study: return "per_study";
    case Approach::fixed: return "fixed";
    case Approach::pooled: return "pooled";
    case Approach::fisher: return "fisher";
    case Approach::williams: return "williams";
    case Approach::williams_pooled: return "williams_pooled";
    default: return "dunnett_polyk";
  }
}

std::pair<std::vector<std::string>, std::vector<std::string>> group_labels(
    const ScoredDataset& data, const std::string& group_by) {
  std::vector<std::string> per_row(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (group_by == "study") {
      per_row[i] = data.study[i];
    } else if (group_by == "stratum") {
      per_row[i] = data.stratum[i];
    } else if (group_by == "study:stratum") {
      per_row[i] = data.study[i] + ":" + data.stratum[i];
    } else {
      throw DataError("unknown group-by '" + group_by +
                      "' (use study, stratum or study:stratum)");
    }
    if (per_row[i].empty() || per_row[i] == ":")
      throw DataError("group-by '" + group_by + "' yields empty labels");
  }
  std::set<std::string> uniq(per_row.begin(), per_row.end());
  return {per_row, {uniq.begin(), uniq.end()}};
}

namespace {

std::vector<int> group_index(const std::vector<std::string>& per_row,
                             const std::vector<std::string>& levels) {
  std::map<std::string, int> pos;
  for (std::size_t i = 0; i < levels.size(); ++i) pos[levels[i]] = static_cast<int>(i);
  std::vector<int> idx(per_row.size());
  for (std::size_t i = 0; i < per_row.size(); ++i) idx[i] = pos.at(per_row[i]);
  return idx;
}

Eigen::VectorXd prior_weights(const ScoredDataset& data, bool use_polyk) {
  if (use_polyk) {
    if (data.polyk_weight.size() != data.rows())
      throw DataError("poly-k weights not attached to the dataset");
    return data.polyk_weight;
  }
  return Eigen::VectorXd::Ones(data.rows());
}

// design [1, score] (+ optional group indicator columns, levels 2..)
DesignMatrix score_design(const ScoredDataset& data, Scoring s,
                          const std::vector<int>* gidx, int n_groups,
                          const std::vector<std::string>* levels) {
  const Eigen::Index n = data.rows();
  const int extra = gidx ? n_groups - 1 : 0;
  DesignMatrix d;
  d.X = Eigen::MatrixXd::Zero(n, 2 + extra);
  d.X.col(0).setOnes();
  d.X.col(1) = data.score(s);
  d.labels = {"intercept", "slope_" + to_string(s)};
  if (gidx) {
    for (int g = 1; g < n_groups; ++g) d.labels.push_back("group_" + (*levels)[g]);
    for (Eigen::Index i = 0; i < n; ++i)
      if ((*gidx)[i] > 0) d.X(i, 1 + (*gidx)[i]) = 1.0;
  }
  return d;
}

ScoredDataset subset_rows(const ScoredDataset& data, const std::vector<Eigen::Index>& rows) {
  ScoredDataset out;
  out.animal_level = data.animal_level;
  out.adjustment = data.adjustment;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.dose.resize(m);
  out.successes.resize(m);
  out.failures.resize(m);
  out.score_ari.resize(m);
  out.score_ord.resize(m);
  out.score_arilog.resize(m);
  if (data.death_time.size()) out.death_time.resize(m);
  if (data.polyk_weight.size()) out.polyk_weight.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index i = rows[j];
    out.study.push_back(data.study[i]);
    out.stratum.push_back(data.stratum[i]);
    if (!data.wscore.empty()) out.wscore.push_back(data.wscore[i]);
    out.dose[j] = data.dose[i];
    out.successes[j] = data.successes[i];
    out.failures[j] = data.failures[i];
    out.score_ari[j] = data.score_ari[i];
    out.score_ord[j] = data.score_ord[i];
    out.score_arilog[j] = data.score_arilog[i];
    if (data.death_time.size()) out.death_time[j] = data.death_time[i];
    if (data.polyk_weight.size()) out.polyk_weight[j] = data.polyk_weight[i];
  }
  return out;
}

std::vector<std::string> scoring_names(const std::vector<Scoring>& ss) {
  std::vector<std::string> out;
  for (Scoring s : ss) out.push_back(to_string(s));
  return out;
}

JointTestResult glm_stack_test(const ScoredDataset& data, const AnalysisConfig& cfg,
                               const std::vector<int>* gidx, int n_groups,
                               const std::vector<std::string>* levels,
                               bool use_polyk) {
  Eigen::VectorXd w = prior_weights(data, use_polyk);
  std::vector<FittedModel> fits;
  fits.reserve(cfg.scorings.size());
  for (Scoring s : cfg.scorings) {
    DesignMatrix d = score_design(data, s, gidx, n_groups, levels);
    fits.push_back(fit_binomial_glm(d, data.successes, data.failures, w));
  }
  std::vector<const FittedModel*> ptrs;
  std::vector<int> slope(fits.size(), 1);
  for (const auto& f : fits) ptrs.push_back(&f);
  JointEstimate je = stack_models(ptrs, slope, scoring_names(cfg.scorings));
  return max_test(je, cfg.alpha, cfg.reference, cfg.t_df, cfg.mvn_accuracy, cfg.seed,
                  cfg.with_bounds);
}

JointTestResult mixed_stack_test(const ScoredDataset& data, const AnalysisConfig& cfg,
                                 const std::vector<int>& gidx, int n_groups,
                                 bool use_polyk,
                                 RandomEffectsSpec::Terms terms) {
  Eigen::VectorXd w = prior_weights(data, use_polyk);
  RandomEffectsSpec spec;
  spec.terms = terms;
  spec.structure = RandomEffectsSpec::Structure::unstructured;

  std::vector<FittedModel> fixed;
  fixed.reserve(cfg.scorings.size());
  for (Scoring s : cfg.scorings) {
    DesignMatrix d = score_design(data, s, nullptr, 0, nullptr);
    Eigen::MatrixXd Z;
    if (spec.terms == RandomEffectsSpec::Terms::intercept_only) {
      Z = Eigen::MatrixXd::Ones(data.rows(), 1);
    } else {
      Z.resize(data.rows(), 2);
      Z.col(0).setOnes();
      Z.col(1) = cfg.random_slope == RandomSlope::match ? data.score(s)
                                                        : data.score(Scoring::ari);
    }
    MixedFit mf = fit_binomial_pql(d.X, Z, gidx, n_groups, data.successes,
                                   data.failures, w, spec);
    fixed.push_back(mixed_to_fixed(mf, d.X, spec, d.labels));
  }
  std::vector<const FittedModel*> ptrs;
  std::vector<int> slope(fixed.size(), 1);
  for (const auto& f : fixed) ptrs.push_back(&f);
  JointEstimate je = stack_models(ptrs, slope, scoring_names(cfg.scorings));
  return max_test(je, cfg.alpha, cfg.reference, cfg.t_df, cfg.mvn_accuracy, cfg.seed,
                  cfg.with_bounds);
}

std::vector<std::pair<std::string, JointTestResult>> per_group_tests(
    const ScoredDataset& data, const AnalysisConfig& cfg) {
  auto [per_row, levels] = group_labels(data, cfg.group_by);
  std::vector<std::pair<std::string, JointTestResult>> out;
  for (const std::string& g : levels) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      if (per_row[i] == g) rows.push_back(i);
    ScoredDataset sub = subset_rows(data, rows);
    out.emplace_back(g, glm_stack_test(sub, cfg, nullptr, 0, nullptr,
                                       data.polyk_weight.size() > 0));
  }
  return out;
}

// dose-level factor labels ordered by mean dose
std::vector<std::string> factor_levels_by_dose(const std::vector<std::string>& labels,
                                               const Eigen::VectorXd& dose) {
  std::map<std::string, std::pair<double, int>> acc;
  for (Eigen::Index i = 0; i < dose.size(); ++i) {
    auto& a = acc[labels[i]];
    a.first += dose[i];
    a.second += 1;
  }
  std::vector<std::pair<double, std::string>> order;
  for (auto& [lab, a] : acc) order.emplace_back(a.first / a.second, lab);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (auto& [d, lab] : order) out.push_back(lab);
  return out;
}

JointTestResult williams_test(const ScoredDataset& data, const AnalysisConfig& cfg,
                              bool pooled, std::vector<std::string>& notes) {
  if (data.wscore.empty())
    throw DataError("williams approach requires a wscore column");
  std::vector<std::string> levels = factor_levels_by_dose(data.wscore, data.dose);
  const int L = static_cast<int>(levels.size());
  if (L < 2) throw DataError("williams: fewer than 2 dose-level labels");
  std::map<std::string, int> lvl;
  for (int j = 0; j < L; ++j) lvl[levels[j]] = j;

  auto [per_row, groups] = group_labels(data, cfg.group_by);
  // warn about per-group gaps in the dose-level labels
  std::map<std::string, std::set<int>> seen;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    seen[per_row[i]].insert(lvl[data.wscore[i]]);
  for (const auto& [g, s] : seen)
    if (static_cast<int>(s.size()) < L)
      notes.push_back("group " + g + " lacks " + std::to_string(L - static_cast<int>(s.size())) +
                      " dose-level label(s)");

  const int M = static_cast<int>(groups.size());
  const int extra = pooled ? 0 : M - 1;
  std::vector<int> gidx = group_index(per_row, groups);

  DesignMatrix d;
  d.X = Eigen::MatrixXd::Zero(data.rows(), L + extra);
  d.X.col(0).setOnes();
  d.labels = {"intercept"};
  for (int j = 1; j < L; ++j) d.labels.push_back("wscore_" + levels[j]);
  for (int g = 1; g <= extra; ++g) d.labels.push_back("group_" + groups[g]);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    int j = lvl[data.wscore[i]];
    if (j > 0) d.X(i, j) = 1.0;
    if (!pooled && gidx[i] > 0) d.X(i, L - 1 + gidx[i]) = 1.0;
  }

  Eigen::VectorXd w = prior_weights(data, data.polyk_weight.size() > 0);
  FittedModel fit = fit_binomial_glm(d, data.successes, data.failures, w);
  std::vector<int> mean_idx(L);
  for (int j = 0; j < L; ++j) mean_idx[j] = j;
  return contrast_test(fit, williams_matrix(L), mean_idx, cfg.alpha, cfg.reference,
                       cfg.t_df, cfg.seed);
}

JointTestResult dunnett_polyk_test(const ScoredDataset& data, const AnalysisConfig& cfg) {
  if (!data.animal_level)
    throw DataError("dunnett_polyk requires animal-level data");
  if (data.polyk_weight.size() != data.rows())
    throw DataError("dunnett_polyk requires attached poly-k weights");
  auto [per_row, groups] = group_labels(data, cfg.group_by);
  if (groups.size() < 2) throw DataError("dunnett_polyk: need >= 2 groups");
  std::vector<int> gidx = group_index(per_row, groups);

  std::set<double> dose_set(data.dose.begin(), data.dose.end());
  std::vector<double> doses(dose_set.begin(), dose_set.end());
  const int L = static_cast<int>(doses.size());
  if (L < 2) throw DataError("dunnett_polyk: fewer than 2 dose levels");
  std::map<double, int> lvl;
  for (int j = 0; j < L; ++j) lvl[doses[j]] = j;

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(data.rows(), L);
  X.col(0).setOnes();
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    if (int j = lvl[data.dose[i]]; j > 0) X(i, j) = 1.0;
  std::vector<std::string> labels = {"intercept"};
  for (int j = 1; j < L; ++j) {
    std::ostringstream os;
    os << "dose_" << doses[j];
    labels.push_back(os.str());
  }

  RandomEffectsSpec spec;
  spec.terms = RandomEffectsSpec::Terms::intercept_only;
  MixedFit mf = fit_binomial_pql(X, Eigen::MatrixXd::Ones(data.rows(), 1), gidx,
                                 static_cast<int>(groups.size()), data.successes,
                                 data.failures, data.polyk_weight, spec);
  FittedModel fit = mixed_to_fixed(mf, X, spec, labels);
  std::vector<int> mean_idx(L);
  for (int j = 0; j < L; ++j) mean_idx[j] = j;
  return contrast_test(fit, dunnett_matrix(L), mean_idx, cfg.alpha, cfg.reference,
                       cfg.t_df, cfg.seed);
}

}  // namespace

ApproachResult run_approach(const ScoredDataset& data, const AnalysisConfig& cfg) {
  if (cfg.scorings.empty()) throw DataError("no scorings configured");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DataError("alpha outside (0,1)");

  ApproachResult res;
  res.approach = cfg.approach;
  res.scoring_labels = scoring_names(cfg.scorings);
  const bool polyk = data.polyk_weight.size() > 0;

  switch (cfg.approach) {
    case Approach::per_study: {
      res.per_group = per_group_tests(data, cfg);
      break;
    }
    case Approach::pooled: {
      res.joint = glm_stack_test(data, cfg, nullptr, 0, nullptr, polyk);
      break;
    }
    case Approach::fixed: {
      auto [per_row, levels] = group_labels(data, cfg.group_by);
      if (levels.size() < 2) throw DataError("fixed approach needs >= 2 groups");
      std::vector<int> gidx = group_index(per_row, levels);
      res.joint = glm_stack_test(data, cfg, &gidx, static_cast<int>(levels.size()),
                                 &levels, polyk);
      break;
    }
    case Approach::mixed: {
      auto [per_row, levels] = group_labels(data, cfg.group_by);
      if (levels.size() < 2) throw DataError("mixed approach needs >= 2 groups");
      std::vector<int> gidx = group_index(per_row, levels);
      res.joint = mixed_stack_test(data, cfg, gidx, static_cast<int>(levels.size()),
                                   polyk, cfg.random_terms);
      break;
    }
    case Approach::fisher: {
      auto per = per_group_tests(data, cfg);
      if (per.size() < 2) throw DataError("fisher approach needs >= 2 groups");
      auto it = std::find(cfg.scorings.begin(), cfg.scorings.end(), cfg.fisher_scoring);
      if (it == cfg.scorings.end())
        throw DataError("fisher scoring not among the configured scorings");
      int sidx = static_cast<int>(it - cfg.scorings.begin());
      double stat = 0.0;
      for (const auto& [g, jt] : per) {
        double p = std::max(1e-300, jt.adjusted_p[sidx]);
        stat += -2.0 * std::log(p);
      }
      res.per_group = std::move(per);
      res.fisher_statistic = stat;
      res.fisher_df = 2 * static_cast<int>(res.per_group.size());
      res.fisher_p = chisq_upper_tail(stat, res.fisher_df);
      break;
    }
    case Approach::williams:
    case Approach::williams_pooled: {
      res.joint = williams_test(data, cfg, cfg.approach == Approach::williams_pooled,
                                res.notes);
      break;
    }
    case Approach::dunnett_polyk: {
      res.joint = dunnett_polyk_test(data, cfg);
      break;
    }
  }
  return res;
}

JointTestResult run_polyk_joint(const ScoredDataset& data, const AnalysisConfig& cfg) {
  if (!data.animal_level) throw DataError("poly-k joint test requires animal-level data");
  if (data.polyk_weight.size() != data.rows())
    throw DataError("poly-k weights not attached");
  auto [per_row, levels] = group_labels(data, cfg.group_by);
  if (levels.size() < 2) throw DataError("poly-k joint test needs >= 2 groups");
  std::vector<int> gidx = group_index(per_row, levels);
  return mixed_stack_test(data, cfg, gidx, static_cast<int>(levels.size()), true,
                          RandomEffectsSpec::Terms::intercept_only);
}

namespace {

std::string column_name(const AnalysisConfig& cfg, const std::string& group = "") {
  switch (cfg.approach) {
    case Approach::mixed: return "Mix";
    case Approach::per_study: return "Only" + group;
    case Approach::fixed: return "Fix";
    case Approach::pooled: return "Pool";
    case Approach::fisher: return "Fish";
    case Approach::williams: return "Wil";
    case Approach::williams_pooled: return "WiP";
    default: return "DunPk";
  }
}

}  // namespace

ComparisonReport compare_all(const ScoredDataset& data,
                             const std::vector<AnalysisConfig>& cfgs) {
  if (cfgs.empty()) throw DataError("compare_all: nothing to compare");

  // row labels: union of scorings in configured order ari, ord, arilog
  std::set<Scoring> wanted;
  for (const auto& cfg : cfgs)
    for (Scoring s : cfg.scorings) wanted.insert(s);
  std::vector<Scoring> rows;
  for (Scoring s : {Scoring::ari, Scoring::ord, Scoring::arilog})
    if (wanted.count(s)) rows.push_back(s);

  ComparisonReport rep;
  for (Scoring s : rows) rep.row_labels.push_back(to_string(s));
  rep.data_hash = dataset_hash(data);
  rep.seed = cfgs.front().seed;
  rep.version = kVersion;
  {
    std::ostringstream os;
    os << "adjust=" << to_string(data.adjustment)
       << " alpha=" << cfgs.front().alpha << " group_by=" << cfgs.front().group_by;
    rep.config_summary = os.str();
  }

  auto scoring_row = [&rows](Scoring s) {
    return static_cast<int>(std::find(rows.begin(), rows.end(), s) - rows.begin());
  };

  auto add_column = [&](const std::string& name,
                        const std::vector<ReportCell>& cells) {
    rep.columns.push_back(name);
    if (rep.cells.empty()) rep.cells.resize(rep.row_labels.size());
    for (std::size_t r = 0; r < rep.row_labels.size(); ++r)
      rep.cells[r].push_back(r < cells.size() ? cells[r] : ReportCell{});
  };

  auto joint_cells = [&](const JointTestResult& jt,
                         const std::vector<Scoring>& ss) {
    std::vector<ReportCell> cells(rep.row_labels.size());
    for (std::size_t k = 0; k < ss.size(); ++k) {
      ReportCell& c = cells[scoring_row(ss[k])];
      c.p = jt.adjusted_p[k];
      c.estimate = jt.joint.estimates[k];
      c.lower_bound = jt.simultaneous_lower_bounds[k];
    }
    return cells;
  };

  for (const AnalysisConfig& cfg : cfgs) {
    try {
      ApproachResult ar = run_approach(data, cfg);
      if (cfg.approach == Approach::per_study) {
        for (const auto& [g, jt] : ar.per_group)
          add_column(column_name(cfg, g), joint_cells(jt, cfg.scorings));
      } else if (cfg.approach == Approach::fisher) {
        std::vector<ReportCell> cells(rep.row_labels.size());
        ReportCell& c = cells[scoring_row(cfg.fisher_scoring)];
        c.p = ar.fisher_p;
        c.note = "chi2(" + std::to_string(ar.fisher_df) + ")";
        add_column(column_name(cfg), cells);
      } else if (cfg.approach == Approach::williams ||
                 cfg.approach == Approach::williams_pooled ||
                 cfg.approach == Approach::dunnett_polyk) {
        // single cell: minimum adjusted p over the contrast rows
        std::vector<ReportCell> cells(rep.row_labels.size());
        ReportCell& c = cells[0];
        c.p = ar.joint->adjusted_p.minCoeff();
        c.note = to_string(cfg.approach);
        add_column(column_name(cfg), cells);
      } else {
        add_column(column_name(cfg), joint_cells(*ar.joint, cfg.scorings));
      }
    } catch (const std::exception& e) {
      std::vector<ReportCell> cells(rep.row_labels.size());
      for (auto& c : cells) c.note = std::string("ERR:") + e.what();
      add_column(column_name(cfg), cells);
    }
  }
  return rep;
}

std::string report_text(const ComparisonReport& rep) {
  std::ostringstream os;
  const int w = 12;
  os << std::left << std::setw(8) << "scoring";
  for (const auto& c : rep.columns) os << std::right << std::setw(w) << c;
  os << '\n';
  for (std::size_t r = 0; r < rep.row_labels.size(); ++r) {
    os << std::left << std::setw(8) << rep.row_labels[r];
    for (std::size_t c = 0; c < rep.columns.size(); ++c) {
      const ReportCell& cell = rep.cells[r][c];
      if (cell.p) {
        os << std::right << std::setw(w) << std::fixed << std::setprecision(4)
           << *cell.p;
      } else if (!cell.note.empty()) {
        std::string n = cell.note.substr(0, w - 2);
        os << std::right << std::setw(w) << n;
      } else {
        os << std::right << std::setw(w) << ".";
      }
    }
    os << '\n';
  }
  os << "# hash=" << std::hex << rep.data_hash << std::dec << " " << rep.config_summary
     << " v" << rep.version << '\n';
  return os.str();
}

}  // namespace polytrend
