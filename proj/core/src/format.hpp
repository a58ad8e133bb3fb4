#pragma once

#include <cstdio>
#include <string>

namespace racelab::detail {

// Shortest text that reads back to the identical double: 17 significant digits.
inline std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace racelab::detail
