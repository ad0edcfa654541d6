#ifndef POLYTREND_PIPELINES_HPP
#define POLYTREND_PIPELINES_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polytrend/contrasts.hpp"
#include "polytrend/data.hpp"
#include "polytrend/lmm.hpp"
#include "polytrend/mmm.hpp"

// End-to-end orchestration of the analysis approaches (mixed model,
// per-study, fixed-effect, pooled, Fisher combination, Williams-type
// contrasts, poly-k Dunnett) and the comparison table across them.

namespace polytrend {

enum class Approach {
  mixed,            // joint PQL mixed model over groups
  per_study,        // independent max test per group
  fixed,            // group indicators as fixed effects
  pooled,           // single model ignoring groups
  fisher,           // Fisher sumlog combination of per-group p-values
  williams,         // Williams contrasts on a dose-level factor (+ group effects)
  williams_pooled,  // same, ignoring groups
  dunnett_polyk     // Dunnett contrasts on a weighted mixed dose-factor model
};

std::string to_string(Approach a);

enum class RandomSlope { ari_always, match };

struct AnalysisConfig {
  Approach approach = Approach::per_study;
  Adjustment adjustment = Adjustment::none;
  double alpha = 0.05;
  std::vector<Scoring> scorings = {Scoring::ari, Scoring::ord, Scoring::arilog};
  RandomSlope random_slope = RandomSlope::ari_always;
  RandomEffectsSpec::Terms random_terms =
      RandomEffectsSpec::Terms::intercept_plus_slope;
  Reference reference = Reference::normal;
  double t_df = 0.0;  // used when reference == student_t
  std::string group_by = "study";  // study | stratum | study:stratum
  Scoring fisher_scoring = Scoring::arilog;
  double polyk = 3.0;
  bool polyk_per_study_tmax = true;
  std::uint64_t seed = kDefaultSeed;
  double mvn_accuracy = 1e-5;
  bool with_bounds = true;  // false skips critical values (simulation hot path)
};

struct ApproachResult {
  Approach approach = Approach::per_study;
  std::vector<std::string> scoring_labels;
  std::optional<JointTestResult> joint;
  std::vector<std::pair<std::string, JointTestResult>> per_group;
  std::optional<double> fisher_p;
  std::optional<double> fisher_statistic;
  int fisher_df = 0;
  std::vector<std::string> notes;
};

/// Row-wise grouping labels for a dataset under a group_by choice, plus the
/// sorted distinct levels.
std::pair<std::vector<std::string>, std::vector<std::string>> group_labels(
    const ScoredDataset& data, const std::string& group_by);

/// Run one approach end to end.
ApproachResult run_approach(const ScoredDataset& data, const AnalysisConfig& cfg);

/// Poly-k weighted joint test on animal-level data (weights must be
/// attached); random intercept per group.
JointTestResult run_polyk_joint(const ScoredDataset& data, const AnalysisConfig& cfg);

struct ReportCell {
  std::optional<double> p;
  std::optional<double> estimate;
  std::optional<double> lower_bound;
  std::string note;
};

struct ComparisonReport {
  std::vector<std::string> row_labels;  // scorings
  std::vector<std::string> columns;     // approaches
  std::vector<std::vector<ReportCell>> cells;  // [row][column]
  std::uint64_t data_hash = 0;
  std::uint64_t seed = 0;
  std::string version;
  std::string config_summary;
};

/// Run every config and assemble the appendix-style comparison table.
/// Individual approach failures become in-cell diagnostic codes.
ComparisonReport compare_all(const ScoredDataset& data,
                             const std::vector<AnalysisConfig>& cfgs);

/// Aligned-column text rendering of the report.
std::string report_text(const ComparisonReport& report);

}  // namespace polytrend

#endif  // POLYTREND_PIPELINES_HPP
