#pragma once

// CSV helpers. Doubles are written with %.17g so that files round-trip exactly.

#include <cstdio>
#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

namespace ricci::io {

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_header(std::ostream& os, std::initializer_list<const char*> names) {
  bool first = true;
  for (const char* n : names) {
    if (!first) os << ',';
    os << n;
    first = false;
  }
  os << '\n';
}

inline void write_row(std::ostream& os, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    os << format_double(values[i]);
  }
  os << '\n';
}

}  // namespace ricci::io
