#ifndef POLYTREND_SVG_HPP
#define POLYTREND_SVG_HPP

#include <string>

#include "polytrend/data.hpp"

namespace polytrend {

/// Dose-response plot: one polyline of crude proportion vs dose per study
/// (or study:stratum) on a square-root-scaled x axis.  Dependency-free
/// static SVG.
std::string dose_response_svg(const ScoredDataset& data,
                              const std::string& group_by = "study");

}  // namespace polytrend

#endif  // POLYTREND_SVG_HPP
