#pragma once

#include <cmath>

namespace skillworld::ad {

inline double symlog(double x) { return std::copysign(std::log1p(std::fabs(x)), x); }
inline double symexp(double x) { return std::copysign(std::expm1(std::fabs(x)), x); }

}  // namespace skillworld::ad
