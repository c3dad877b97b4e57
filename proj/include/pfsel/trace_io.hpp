#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pfsel/errors.hpp"
#include "pfsel/trace.hpp"

namespace pfsel {

inline constexpr std::string_view kTraceHeader =
    "timestamp_ms,instructions,mem_accesses,branch_misses,cache_misses,"
    "cpu_cycles,l2d_refills,l2i_refills";

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename Int>
inline Int parse_int_field(std::string_view field, const std::string& where, int line) {
  field = trim(field);
  if (field.empty())
    throw ParseError(where + ":" + std::to_string(line) + ": empty numeric field");
  if (field.front() == '-')
    throw ParseError(where + ":" + std::to_string(line) + ": negative count '" + std::string(field) + "'");
  Int v{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(where + ":" + std::to_string(line) + ": bad integer '" + std::string(field) + "'");
  return v;
}

inline void split_csv(std::string_view row, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  for (std::size_t i = 0; i <= row.size(); ++i) {
    if (i == row.size() || row[i] == ',') {
      out.push_back(row.substr(start, i - start));
      start = i + 1;
    }
  }
}

}  // namespace detail

// Parses the trace CSV format: optional leading `# key=value` comment lines
// (workload_name, config, period_ms), a fixed header row, then one decimal
// integer row per sample. Errors carry `name:line`.
inline Trace parse_trace(std::istream& in, const std::string& name) {
  Trace trace;
  std::string linebuf;
  std::vector<std::string_view> fields;
  int line = 0;
  bool header_seen = false;

  while (std::getline(in, linebuf)) {
    ++line;
    std::string_view sv = detail::trim(linebuf);
    if (sv.empty()) continue;

    if (sv.front() == '#') {
      if (header_seen)
        throw ParseError(name + ":" + std::to_string(line) + ": comment after header");
      sv.remove_prefix(1);
      sv = detail::trim(sv);
      auto eq = sv.find('=');
      if (eq == std::string_view::npos) continue;  // free-form comment
      std::string_view key = detail::trim(sv.substr(0, eq));
      std::string_view val = detail::trim(sv.substr(eq + 1));
      if (key == "workload_name") {
        trace.meta.workload_name = std::string(val);
      } else if (key == "config") {
        auto cfg = PrefetcherConfig::parse(val);
        if (!cfg || !cfg->is_valid())
          throw ParseError(name + ":" + std::to_string(line) + ": bad config mask '" + std::string(val) + "'");
        trace.meta.config = *cfg;
      } else if (key == "period_ms") {
        trace.meta.period_ms = detail::parse_int_field<std::uint32_t>(val, name, line);
      }
      // unknown keys ignored
      continue;
    }

    if (!header_seen) {
      if (sv != kTraceHeader)
        throw ParseError(name + ":" + std::to_string(line) + ": malformed header row");
      header_seen = true;
      continue;
    }

    detail::split_csv(sv, fields);
    if (fields.size() != 8)
      throw ParseError(name + ":" + std::to_string(line) + ": expected 8 fields, got " +
                       std::to_string(fields.size()));
    CounterSample s;
    s.timestamp_ms = detail::parse_int_field<std::int64_t>(fields[0], name, line);
    s.instructions = detail::parse_int_field<std::uint64_t>(fields[1], name, line);
    s.mem_accesses = detail::parse_int_field<std::uint64_t>(fields[2], name, line);
    s.branch_misses = detail::parse_int_field<std::uint64_t>(fields[3], name, line);
    s.cache_misses = detail::parse_int_field<std::uint64_t>(fields[4], name, line);
    s.cpu_cycles = detail::parse_int_field<std::uint64_t>(fields[5], name, line);
    s.l2d_refills = detail::parse_int_field<std::uint64_t>(fields[6], name, line);
    s.l2i_refills = detail::parse_int_field<std::uint64_t>(fields[7], name, line);
    if (!trace.samples.empty() && s.timestamp_ms <= trace.samples.back().timestamp_ms)
      throw ParseError(name + ":" + std::to_string(line) + ": timestamp not increasing (" +
                       std::to_string(s.timestamp_ms) + " after " +
                       std::to_string(trace.samples.back().timestamp_ms) + ")");
    trace.samples.push_back(s);
  }

  if (!header_seen) throw ParseError(name + ": missing header row");
  if (trace.samples.empty()) throw ParseError(name + ": empty trace (at least one sample required)");
  return trace;
}

inline Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  return parse_trace(in, path);
}

inline void write_trace(const Trace& trace, std::ostream& out) {
  if (!trace.meta.workload_name.empty()) out << "# workload_name=" << trace.meta.workload_name << "\n";
  if (trace.meta.config) out << "# config=" << trace.meta.config->to_string() << "\n";
  out << "# period_ms=" << trace.meta.period_ms << "\n";
  out << kTraceHeader << "\n";
  for (const auto& s : trace.samples) {
    out << s.timestamp_ms << ',' << s.instructions << ',' << s.mem_accesses << ','
        << s.branch_misses << ',' << s.cache_misses << ',' << s.cpu_cycles << ','
        << s.l2d_refills << ',' << s.l2i_refills << "\n";
  }
}

inline void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_trace(trace, out);
  if (!out) throw ParseError(path + ": write failed");
}

}  // namespace pfsel
