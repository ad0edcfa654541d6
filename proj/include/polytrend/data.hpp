#ifndef POLYTREND_DATA_HPP
#define POLYTREND_DATA_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

// Study-data ingestion and transformation: grouped and animal-level CSV
// schemas, pseudo-count adjustment, the three dose scorings, poly-k
// survival weights.

namespace polytrend {

struct DoseRecord {
  std::string study;
  std::string stratum;  // empty when absent
  double dose = 0.0;
  long tumor = 0;
  long at_risk = 0;
  std::string wscore;   // optional user-supplied dose-level label
};

struct AnimalRecord {
  std::string study;
  double dose = 0.0;
  int tumor = 0;  // 0/1
  double death_time = 0.0;
};

enum class Adjustment { none, add1, add2 };

enum class Scoring { ari, ord, arilog };

std::string to_string(Adjustment a);
std::string to_string(Scoring s);

/// Zero-dose substitution rule for the logarithmic scoring.
struct ArilogZeroRule {
  enum class Kind { extrapolate, fraction };
  Kind kind = Kind::extrapolate;  // d0 = d1^2 / d2
  double fraction = 0.5;          // d0 = fraction * d1 when kind == fraction
};

/// A dataset augmented with the three dose-score columns; rows are sorted
/// canonically (block, then dose, then death time) so downstream results
/// do not depend on input row order.
struct ScoredDataset {
  bool animal_level = false;
  Adjustment adjustment = Adjustment::none;

  std::vector<std::string> study;
  std::vector<std::string> stratum;   // grouped data only; "" otherwise
  std::vector<std::string> wscore;    // empty vector when the column is absent
  Eigen::VectorXd dose;
  Eigen::VectorXd successes;          // tumor count (+ adjustment)
  Eigen::VectorXd failures;           // no-tumor count (+ adjustment)
  Eigen::VectorXd score_ari;
  Eigen::VectorXd score_ord;
  Eigen::VectorXd score_arilog;
  Eigen::VectorXd death_time;         // animal level only
  Eigen::VectorXd polyk_weight;       // size 0 until attached

  Eigen::Index rows() const { return dose.size(); }
  const Eigen::VectorXd& score(Scoring s) const {
    switch (s) {
      case Scoring::ari: return score_ari;
      case Scoring::ord: return score_ord;
      default: return score_arilog;
    }
  }
};

/// Grouped CSV: header study,stratum,dose,tumor,at_risk (+ optional wscore),
/// matched by name.  Block invariants (distinct doses, a control and two
/// nonzero levels per study/stratum block) are validated here.
std::vector<DoseRecord> parse_grouped_csv(const std::string& path);

/// Animal CSV: header study,dose,tumor,death_time.
std::vector<AnimalRecord> parse_animal_csv(const std::string& path);

struct AdjustedCounts {
  Eigen::VectorXd tumor;
  Eigen::VectorXd no_tumor;
};

/// add2: +1 to both cells; add1: +0.5 to both cells.  Input records are not
/// modified.
AdjustedCounts apply_pseudocounts(const std::vector<DoseRecord>& records,
                                  Adjustment mode);

/// Score a grouped dataset (rows sorted canonically first).
ScoredDataset compute_dose_scores(const std::vector<DoseRecord>& records,
                                  Adjustment adjustment = Adjustment::none,
                                  const ArilogZeroRule& rule = {});

/// Score an animal-level dataset.
ScoredDataset compute_dose_scores(const std::vector<AnimalRecord>& records,
                                  const ArilogZeroRule& rule = {});

/// Poly-k weight per animal: 1 for tumor-bearing animals, otherwise
/// (death_time / t_max)^k with t_max taken per study block (or globally).
/// Records must be in the same order as the rows they describe.
Eigen::VectorXd compute_polyk_weights(const std::vector<AnimalRecord>& records,
                                      double k, bool per_study_tmax = true);

/// Convenience: scored animal dataset with weights attached (row order of
/// the returned dataset, not of the input).
ScoredDataset scored_with_polyk(const std::vector<AnimalRecord>& records,
                                double k, bool per_study_tmax = true,
                                const ArilogZeroRule& rule = {});

/// FNV-1a content hash of the canonical row serialization, for report
/// provenance.
std::uint64_t dataset_hash(const ScoredDataset& data);

}  // namespace polytrend

#endif  // POLYTREND_DATA_HPP
