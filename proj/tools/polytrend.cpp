// polytrend: Tukey-type maximum trend tests for repeated tumor bioassays.
//
// Subcommands:
//   trend     per-study max trend test on a grouped CSV (optional SVG plot)
//   joint     mixed-model joint test across studies
//   compare   comparison table across approaches
//   polyk     poly-k weights + weighted joint test on an animal-level CSV
//   simulate  size/power simulation harness from a scenario JSON

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "polytrend/data.hpp"
#include "polytrend/errors.hpp"
#include "polytrend/pipelines.hpp"
#include "polytrend/report_json.hpp"
#include "polytrend/sim.hpp"
#include "polytrend/svg.hpp"
#include "polytrend/version.hpp"

namespace {

using namespace polytrend;

constexpr int kExitData = 2;
constexpr int kExitFit = 3;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("POLYTREND_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring unparsable POLYTREND_SEED\n";
    }
  }
  return kDefaultSeed;
}

struct CommonOpts {
  std::string adjust = "none";
  std::string scorings = "ari,ord,arilog";
  std::string reference = "normal";
  double t_df = 0.0;
  double alpha = 0.05;
  std::string arilog_zero = "extrapolate";
  std::string group_by = "study";
  std::string random_slope = "ari";
  std::string out;
  bool no_meta = false;
  std::uint64_t seed = default_seed();
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_random = false) {
  cmd->add_option("--adjust", o.adjust, "Pseudo-count adjustment: none|add1|add2");
  cmd->add_option("--scorings", o.scorings, "Comma list from ari,ord,arilog");
  cmd->add_option("--alpha", o.alpha, "One-sided significance level");
  cmd->add_option("--reference", o.reference, "normal|t");
  cmd->add_option("--t-df", o.t_df, "Degrees of freedom for the t reference");
  cmd->add_option("--arilog-zero", o.arilog_zero,
                  "Zero-dose rule for the log scoring: extrapolate|fraction:<f>");
  cmd->add_option("--seed", o.seed, "QMC / simulation seed (env POLYTREND_SEED)");
  cmd->add_option("--out", o.out, "Write JSON here instead of stdout");
  cmd->add_flag("--no-meta", o.no_meta, "Omit timestamps for byte-identical output");
  if (with_random)
    cmd->add_option("--random-slope", o.random_slope,
                    "Random slope score: ari (paper) | match");
}

AnalysisConfig build_config(const CommonOpts& o) {
  AnalysisConfig cfg;
  if (o.adjust == "none") cfg.adjustment = Adjustment::none;
  else if (o.adjust == "add1") cfg.adjustment = Adjustment::add1;
  else if (o.adjust == "add2") cfg.adjustment = Adjustment::add2;
  else throw DataError("unknown --adjust '" + o.adjust + "'");

  cfg.scorings.clear();
  std::string token;
  std::istringstream ss(o.scorings);
  while (std::getline(ss, token, ',')) {
    if (token == "ari") cfg.scorings.push_back(Scoring::ari);
    else if (token == "ord") cfg.scorings.push_back(Scoring::ord);
    else if (token == "arilog") cfg.scorings.push_back(Scoring::arilog);
    else throw DataError("unknown scoring '" + token + "'");
  }
  if (cfg.scorings.empty()) throw DataError("--scorings is empty");

  if (o.reference == "normal") cfg.reference = Reference::normal;
  else if (o.reference == "t") cfg.reference = Reference::student_t;
  else throw DataError("unknown --reference '" + o.reference + "'");
  cfg.t_df = o.t_df;
  cfg.alpha = o.alpha;
  cfg.group_by = o.group_by;
  cfg.seed = o.seed;
  if (o.random_slope == "ari") cfg.random_slope = RandomSlope::ari_always;
  else if (o.random_slope == "match") cfg.random_slope = RandomSlope::match;
  else throw DataError("unknown --random-slope '" + o.random_slope + "'");
  return cfg;
}

ArilogZeroRule build_zero_rule(const CommonOpts& o) {
  ArilogZeroRule rule;
  if (o.arilog_zero == "extrapolate") {
    rule.kind = ArilogZeroRule::Kind::extrapolate;
  } else if (o.arilog_zero.rfind("fraction:", 0) == 0) {
    rule.kind = ArilogZeroRule::Kind::fraction;
    rule.fraction = std::stod(o.arilog_zero.substr(9));
    if (rule.fraction <= 0.0) throw DataError("--arilog-zero fraction must be > 0");
  } else {
    throw DataError("unknown --arilog-zero '" + o.arilog_zero + "'");
  }
  return rule;
}

void emit(const nlohmann::json& j, const CommonOpts& o) {
  if (o.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream f(o.out);
    if (!f) throw DataError("cannot write " + o.out);
    f << j.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tukey-type maximum trend tests for repeated tumor bioassays"};
  app.set_version_flag("--version", std::string("polytrend ") + kVersion);
  app.require_subcommand(1);

  // trend
  std::string trend_csv, trend_study, trend_plot;
  CommonOpts trend_opts;
  auto* trend = app.add_subcommand("trend", "Per-study Tukey max trend test");
  trend->add_option("csv", trend_csv, "Grouped CSV (study,stratum,dose,tumor,at_risk)")
      ->required();
  trend->add_option("--study", trend_study, "Restrict to one group label");
  trend->add_option("--group-by", trend_opts.group_by, "study|stratum|study:stratum");
  trend->add_option("--plot", trend_plot, "Write a dose-response SVG here");
  add_common(trend, trend_opts);

  // joint
  std::string joint_csv;
  CommonOpts joint_opts;
  auto* joint = app.add_subcommand("joint", "Mixed-model joint trend test");
  joint->add_option("csv", joint_csv, "Grouped CSV")->required();
  joint->add_option("--group-by", joint_opts.group_by, "study|stratum|study:stratum")
      ->required();
  add_common(joint, joint_opts, true);

  // compare
  std::string cmp_csv;
  CommonOpts cmp_opts;
  bool cmp_text = false;
  auto* cmp = app.add_subcommand("compare", "Comparison table across approaches");
  cmp->add_option("csv", cmp_csv, "Grouped CSV")->required();
  cmp->add_option("--group-by", cmp_opts.group_by, "study|stratum|study:stratum")
      ->required();
  cmp->add_flag("--text", cmp_text, "Aligned text table instead of JSON");
  add_common(cmp, cmp_opts, true);

  // polyk
  std::string pk_csv;
  double pk_k = 3.0;
  bool pk_global_tmax = false;
  CommonOpts pk_opts;
  auto* pk = app.add_subcommand("polyk", "Poly-k weights + weighted joint test");
  pk->add_option("csv", pk_csv, "Animal CSV (study,dose,tumor,death_time)")->required();
  pk->add_option("--k", pk_k, "Poly-k tuning parameter (default 3)");
  pk->add_flag("--global-tmax", pk_global_tmax, "Use one t_max across studies");
  pk->add_option("--group-by", pk_opts.group_by, "study|stratum|study:stratum")
      ->required();
  add_common(pk, pk_opts, true);

  // simulate
  std::string sim_scenario;
  std::string sim_approaches = "per_study";
  bool sim_text_out = false;
  CommonOpts sim_opts;
  auto* sim = app.add_subcommand("simulate", "Size/power simulation harness");
  sim->add_option("scenario", sim_scenario, "Scenario JSON file")->required();
  sim->add_option("--approaches", sim_approaches,
                  "Comma list: mixed,per_study,fixed,pooled,fisher");
  sim->add_flag("--text", sim_text_out, "Text table instead of JSON");
  add_common(sim, sim_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*trend) {
      AnalysisConfig cfg = build_config(trend_opts);
      cfg.approach = Approach::per_study;
      auto records = parse_grouped_csv(trend_csv);
      ScoredDataset data =
          compute_dose_scores(records, cfg.adjustment, build_zero_rule(trend_opts));
      if (!trend_plot.empty()) {
        std::ofstream f(trend_plot);
        if (!f) throw DataError("cannot write " + trend_plot);
        f << dose_response_svg(data, trend_opts.group_by);
      }
      ApproachResult res = run_approach(data, cfg);
      nlohmann::json j;
      j["command"] = "trend";
      nlohmann::json per = nlohmann::json::object();
      for (const auto& [g, jt] : res.per_group) {
        if (!trend_study.empty() && g != trend_study) continue;
        per[g] = to_json(jt);
      }
      if (!trend_study.empty() && per.empty())
        throw DataError("group '" + trend_study + "' not present in the data");
      j["per_group"] = per;
      std::ostringstream hash;
      hash << std::hex << dataset_hash(data);
      j["meta"] = {{"data_hash", hash.str()}, {"seed", trend_opts.seed},
                   {"version", kVersion}};
      emit(j, trend_opts);
    } else if (*joint) {
      AnalysisConfig cfg = build_config(joint_opts);
      cfg.approach = Approach::mixed;
      auto records = parse_grouped_csv(joint_csv);
      ScoredDataset data =
          compute_dose_scores(records, cfg.adjustment, build_zero_rule(joint_opts));
      ApproachResult res = run_approach(data, cfg);
      nlohmann::json j = to_json(res);
      j["command"] = "joint";
      std::ostringstream hash;
      hash << std::hex << dataset_hash(data);
      j["meta"] = {{"data_hash", hash.str()}, {"seed", joint_opts.seed},
                   {"version", kVersion}};
      emit(j, joint_opts);
    } else if (*cmp) {
      AnalysisConfig base = build_config(cmp_opts);
      auto records = parse_grouped_csv(cmp_csv);
      ScoredDataset data =
          compute_dose_scores(records, base.adjustment, build_zero_rule(cmp_opts));
      std::vector<AnalysisConfig> cfgs;
      for (Approach a : {Approach::mixed, Approach::per_study, Approach::pooled,
                         Approach::fixed, Approach::fisher}) {
        AnalysisConfig c = base;
        c.approach = a;
        cfgs.push_back(c);
      }
      if (!data.wscore.empty()) {
        for (Approach a : {Approach::williams, Approach::williams_pooled}) {
          AnalysisConfig c = base;
          c.approach = a;
          cfgs.push_back(c);
        }
      }
      ComparisonReport rep = compare_all(data, cfgs);
      if (cmp_text) {
        if (cmp_opts.out.empty()) {
          std::cout << report_text(rep);
        } else {
          std::ofstream f(cmp_opts.out);
          f << report_text(rep);
        }
      } else {
        emit(to_json(rep, !cmp_opts.no_meta), cmp_opts);
      }
    } else if (*pk) {
      AnalysisConfig cfg = build_config(pk_opts);
      cfg.polyk = pk_k;
      cfg.polyk_per_study_tmax = !pk_global_tmax;
      auto records = parse_animal_csv(pk_csv);
      ScoredDataset data = scored_with_polyk(records, pk_k, !pk_global_tmax,
                                             build_zero_rule(pk_opts));
      JointTestResult jt = run_polyk_joint(data, cfg);
      nlohmann::json j;
      j["command"] = "polyk";
      j["k"] = pk_k;
      j["weights"] = nlohmann::json::array();
      for (Eigen::Index i = 0; i < data.rows(); ++i)
        j["weights"].push_back(data.polyk_weight[i]);
      j["joint"] = to_json(jt);
      std::ostringstream hash;
      hash << std::hex << dataset_hash(data);
      j["meta"] = {{"data_hash", hash.str()}, {"seed", pk_opts.seed},
                   {"version", kVersion}};
      emit(j, pk_opts);
    } else if (*sim) {
      AnalysisConfig base = build_config(sim_opts);
      Scenario sc = scenario_from_json_file(sim_scenario);
      if (sim_opts.seed != default_seed() || !std::getenv("POLYTREND_SEED"))
        sc.seed = sim_opts.seed == kDefaultSeed ? sc.seed : sim_opts.seed;
      std::vector<AnalysisConfig> cfgs;
      std::istringstream ss(sim_approaches);
      std::string token;
      while (std::getline(ss, token, ',')) {
        AnalysisConfig c = base;
        if (token == "mixed") c.approach = Approach::mixed;
        else if (token == "per_study") c.approach = Approach::per_study;
        else if (token == "fixed") c.approach = Approach::fixed;
        else if (token == "pooled") c.approach = Approach::pooled;
        else if (token == "fisher") c.approach = Approach::fisher;
        else throw DataError("unknown approach '" + token + "'");
        cfgs.push_back(c);
      }
      SimResult res = simulate(sc, cfgs);
      if (sim_text_out) {
        if (sim_opts.out.empty()) {
          std::cout << sim_text(res);
        } else {
          std::ofstream f(sim_opts.out);
          f << sim_text(res);
        }
      } else {
        emit(to_json(res), sim_opts);
      }
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFit;
  }
  return 0;
}
