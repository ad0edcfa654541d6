#ifndef POLYTREND_SIM_HPP
#define POLYTREND_SIM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polytrend/pipelines.hpp"

// Size/power simulation harness: generate repeated-bioassay data under
// configurable dose-response shapes, between-study heterogeneity and
// mortality, run the configured approaches, report rejection rates.

namespace polytrend {

/// Counter-based generator: the value stream is a pure function of
/// (seed, replicate, stream, counter), so replicates are reproducible
/// independent of execution order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream);

  std::uint64_t next_u64();
  double next_double();                // [0, 1)
  double next_normal();                // inverse-CDF transform
  int next_binomial(int n, double p);
  double next_exponential(double rate);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

enum class Shape { flat, linear_logit, plateau, loglinear };

std::string to_string(Shape s);

struct MortalitySpec {
  std::vector<double> hazard_per_dose;  // exponential death hazard per dose level
  double t_end = 730.0;                 // administrative end of study
};

struct Scenario {
  int n_studies = 1;
  std::vector<std::vector<double>> doses;   // per study
  std::vector<std::vector<int>> group_sizes;
  double control_rate = 0.1;
  Shape shape = Shape::flat;
  double slope = 0.0;            // shape parameter on the logit scale
  double plateau_at = 0.0;       // dose beyond which the response is flat
  double sd_intercept = 0.0;     // between-study sd, logit scale
  double sd_slope = 0.0;
  std::optional<MortalitySpec> mortality;
  int replications = 2000;
  std::uint64_t seed = kDefaultSeed;
};

/// Validate invariants (rates in (0,1), replications >= 100, shapes of the
/// dose/group arrays); throws DataError.
void validate(const Scenario& sc);

Scenario scenario_from_json_file(const std::string& path);

struct ApproachRate {
  std::string approach;
  double rejection_rate = 0.0;
  double standard_error = 0.0;
  int rejections = 0;
  int failures = 0;
  double mean_ms_per_replicate = 0.0;
};

struct SimResult {
  std::vector<ApproachRate> per_approach;
  int replications = 0;
  std::uint64_t seed = 0;
  bool excess_failures = false;  // > 5% of replicates failed for some approach
};

/// Run the scenario; rejection = min adjusted p < cfg.alpha.  Per-replicate
/// fit failures are counted and excluded, never fatal.
SimResult simulate(const Scenario& scenario, const std::vector<AnalysisConfig>& approaches);

std::string sim_text(const SimResult& result);

}  // namespace polytrend

#endif  // POLYTREND_SIM_HPP
