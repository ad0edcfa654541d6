#ifndef POLYTREND_VERSION_HPP
#define POLYTREND_VERSION_HPP

namespace polytrend {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace polytrend

#endif  // POLYTREND_VERSION_HPP
