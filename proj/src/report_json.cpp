#include "polytrend/report_json.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "polytrend/version.hpp"

namespace polytrend {

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

nlohmann::json to_json(const JointTestResult& r) {
  nlohmann::json j;
  j["labels"] = r.joint.labels;
  j["estimates"] = vec_json(r.joint.estimates);
  j["z_statistics"] = vec_json(r.joint.z_statistics);
  j["correlation"] = mat_json(r.joint.correlation);
  j["adjusted_p"] = vec_json(r.adjusted_p);
  j["unadjusted_p"] = vec_json(r.unadjusted_p);
  j["t_max"] = r.t_max;
  j["critical_value"] = r.critical_value;
  j["simultaneous_lower_bounds"] = vec_json(r.simultaneous_lower_bounds);
  j["alpha"] = r.alpha;
  return j;
}

nlohmann::json to_json(const ApproachResult& r) {
  nlohmann::json j;
  j["approach"] = to_string(r.approach);
  j["scorings"] = r.scoring_labels;
  if (r.joint) j["joint"] = to_json(*r.joint);
  if (!r.per_group.empty()) {
    nlohmann::json pg = nlohmann::json::object();
    for (const auto& [g, jt] : r.per_group) pg[g] = to_json(jt);
    j["per_group"] = pg;
  }
  if (r.fisher_p) {
    j["fisher"] = {{"p", *r.fisher_p},
                   {"statistic", *r.fisher_statistic},
                   {"df", r.fisher_df}};
  }
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

nlohmann::json to_json(const ComparisonReport& r, bool with_meta_timestamp) {
  nlohmann::json j;
  j["rows"] = r.row_labels;
  j["columns"] = r.columns;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& row : r.cells) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& c : row) {
      nlohmann::json jc = nlohmann::json::object();
      if (c.p) jc["p"] = *c.p;
      if (c.estimate) jc["estimate"] = *c.estimate;
      if (c.lower_bound) jc["lower_bound"] = *c.lower_bound;
      if (!c.note.empty()) jc["note"] = c.note;
      jr.push_back(jc);
    }
    cells.push_back(jr);
  }
  j["cells"] = cells;
  std::ostringstream hash;
  hash << std::hex << r.data_hash;
  j["meta"] = {{"data_hash", hash.str()},
               {"seed", r.seed},
               {"version", r.version},
               {"config", r.config_summary}};
  if (with_meta_timestamp) j["meta"]["generated_at"] = utc_now();
  return j;
}

nlohmann::json to_json(const SimResult& r) {
  nlohmann::json j;
  j["replications"] = r.replications;
  j["seed"] = r.seed;
  j["excess_failures"] = r.excess_failures;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& pa : r.per_approach) {
    arr.push_back({{"approach", pa.approach},
                   {"rejection_rate", pa.rejection_rate},
                   {"standard_error", pa.standard_error},
                   {"rejections", pa.rejections},
                   {"failures", pa.failures},
                   {"mean_ms_per_replicate", pa.mean_ms_per_replicate}});
  }
  j["per_approach"] = arr;
  j["version"] = kVersion;
  return j;
}

}  // namespace polytrend
