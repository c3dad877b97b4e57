#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

#include "pfsel/errors.hpp"

namespace pfsel {

// Shortest-ish round-trippable double formatting (%.17g), locale-free.
inline std::string fmt_double(double v, int precision = 17) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

inline double parse_double_field(std::string_view field, const std::string& where, int line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double v{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(where + ":" + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

}  // namespace pfsel
