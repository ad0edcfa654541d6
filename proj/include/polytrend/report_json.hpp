#ifndef POLYTREND_REPORT_JSON_HPP
#define POLYTREND_REPORT_JSON_HPP

#include <nlohmann/json.hpp>

#include "polytrend/mmm.hpp"
#include "polytrend/pipelines.hpp"
#include "polytrend/sim.hpp"

// JSON views of the result types; shapes match the files under schemas/.

namespace polytrend {

nlohmann::json to_json(const JointTestResult& r);
nlohmann::json to_json(const ApproachResult& r);
nlohmann::json to_json(const ComparisonReport& r, bool with_meta_timestamp);
nlohmann::json to_json(const SimResult& r);

}  // namespace polytrend

#endif  // POLYTREND_REPORT_JSON_HPP
