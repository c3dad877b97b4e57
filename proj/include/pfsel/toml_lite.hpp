#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pfsel/errors.hpp"

namespace pfsel {

// Reader for the TOML subset the workload-spec and manifest files use:
// comments, `key = value` with integer/float/string/string-array values,
// [table], [table.sub], [[array-of-tables]] with sub-tables attaching to the
// most recent array element, and bare or quoted keys.
struct TomlValue {
  enum class Type { kInt, kFloat, kString, kStringArray };
  Type type = Type::kInt;
  std::int64_t i = 0;
  double f = 0;
  std::string s;
  std::vector<std::string> arr;
  int line = 0;

  std::int64_t as_int(const std::string& where) const {
    if (type != Type::kInt) throw ParseError(where + ": expected integer");
    return i;
  }
  double as_double(const std::string& where) const {
    if (type == Type::kFloat) return f;
    if (type == Type::kInt) return static_cast<double>(i);
    throw ParseError(where + ": expected number");
  }
  const std::string& as_string(const std::string& where) const {
    if (type != Type::kString) throw ParseError(where + ": expected string");
    return s;
  }
  const std::vector<std::string>& as_string_array(const std::string& where) const {
    if (type != Type::kStringArray) throw ParseError(where + ": expected array of strings");
    return arr;
  }
};

struct TomlTable {
  std::map<std::string, TomlValue> values;
  std::map<std::string, TomlTable> tables;
  std::map<std::string, std::vector<TomlTable>> arrays;

  const TomlValue* find(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  }
  const TomlValue& require(const std::string& key, const std::string& where) const {
    const TomlValue* v = find(key);
    if (!v) throw ParseError(where + ": missing key '" + key + "'");
    return *v;
  }
  const TomlTable* find_table(const std::string& key) const {
    auto it = tables.find(key);
    return it == tables.end() ? nullptr : &it->second;
  }
};

namespace toml_detail {

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string parse_basic_string(std::string_view sv, const std::string& where) {
  // sv includes the surrounding quotes
  if (sv.size() < 2 || sv.front() != '"' || sv.back() != '"')
    throw ParseError(where + ": malformed string");
  std::string out;
  for (std::size_t i = 1; i + 1 < sv.size(); ++i) {
    char c = sv[i];
    if (c == '\\') {
      if (i + 2 >= sv.size()) throw ParseError(where + ": dangling escape");
      char e = sv[++i];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: throw ParseError(where + ": unsupported escape \\" + std::string(1, e));
      }
    } else {
      out += c;
    }
  }
  return out;
}

inline TomlValue parse_value(std::string_view sv, const std::string& where, int line) {
  TomlValue v;
  v.line = line;
  sv = strip(sv);
  if (sv.empty()) throw ParseError(where + ": empty value");
  if (sv.front() == '"') {
    v.type = TomlValue::Type::kString;
    v.s = parse_basic_string(sv, where);
    return v;
  }
  if (sv.front() == '[') {
    if (sv.back() != ']') throw ParseError(where + ": unterminated array");
    v.type = TomlValue::Type::kStringArray;
    std::string_view body = strip(sv.substr(1, sv.size() - 2));
    while (!body.empty()) {
      if (body.front() != '"') throw ParseError(where + ": arrays may contain only strings");
      std::size_t end = 1;
      while (end < body.size() && !(body[end] == '"' && body[end - 1] != '\\')) ++end;
      if (end >= body.size()) throw ParseError(where + ": unterminated string in array");
      v.arr.push_back(parse_basic_string(body.substr(0, end + 1), where));
      body = strip(body.substr(end + 1));
      if (!body.empty()) {
        if (body.front() != ',') throw ParseError(where + ": expected ',' in array");
        body = strip(body.substr(1));
      }
    }
    return v;
  }
  const bool is_float = sv.find_first_of(".eE") != std::string_view::npos &&
                        !(sv.size() > 1 && (sv[0] == '0' && sv[1] == 'x'));
  if (is_float) {
    v.type = TomlValue::Type::kFloat;
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v.f);
    if (ec != std::errc() || p != sv.data() + sv.size())
      throw ParseError(where + ": bad number '" + std::string(sv) + "'");
    return v;
  }
  v.type = TomlValue::Type::kInt;
  auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v.i);
  if (ec != std::errc() || p != sv.data() + sv.size())
    throw ParseError(where + ": bad value '" + std::string(sv) + "'");
  return v;
}

inline std::string parse_key(std::string_view sv, const std::string& where) {
  sv = strip(sv);
  if (sv.empty()) throw ParseError(where + ": empty key");
  if (sv.front() == '"') return parse_basic_string(sv, where);
  for (char c : sv)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      throw ParseError(where + ": bad key '" + std::string(sv) + "'");
  return std::string(sv);
}

inline std::vector<std::string> split_path(std::string_view sv, const std::string& where) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= sv.size(); ++i) {
    if (i == sv.size() || sv[i] == '.') {
      parts.push_back(parse_key(sv.substr(start, i - start), where));
      start = i + 1;
    }
  }
  return parts;
}

// Walks all but the last path component; array names resolve to their most
// recent element, per TOML dotted-header semantics.
inline TomlTable* walk(TomlTable* t, std::span<const std::string> parts, const std::string& where) {
  for (const auto& p : parts) {
    if (auto ait = t->arrays.find(p); ait != t->arrays.end()) {
      if (ait->second.empty()) throw ParseError(where + ": empty table array '" + p + "'");
      t = &ait->second.back();
    } else {
      t = &t->tables[p];
    }
  }
  return t;
}

}  // namespace toml_detail

inline TomlTable parse_toml(std::istream& in, const std::string& name) {
  TomlTable root;
  TomlTable* current = &root;
  std::string linebuf;
  int line = 0;
  while (std::getline(in, linebuf)) {
    ++line;
    const std::string where = name + ":" + std::to_string(line);
    std::string_view sv = toml_detail::strip(linebuf);
    if (sv.empty() || sv.front() == '#') continue;

    if (sv.front() == '[') {
      const bool is_array = sv.size() > 1 && sv[1] == '[';
      const std::string_view closer = is_array ? "]]" : "]";
      if (!sv.ends_with(closer)) throw ParseError(where + ": malformed table header");
      std::string_view inner = sv.substr(is_array ? 2 : 1, sv.size() - 2 * (is_array ? 2 : 1));
      auto parts = toml_detail::split_path(toml_detail::strip(inner), where);
      if (parts.empty()) throw ParseError(where + ": empty table header");
      const std::string last = parts.back();
      parts.pop_back();
      TomlTable* parent = toml_detail::walk(&root, parts, where);
      if (is_array) {
        parent->arrays[last].emplace_back();
        current = &parent->arrays[last].back();
      } else {
        current = &parent->tables[last];
      }
      continue;
    }

    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = toml_detail::parse_key(sv.substr(0, eq), where);
    if (current->values.count(key)) throw ParseError(where + ": duplicate key '" + key + "'");
    current->values[key] = toml_detail::parse_value(sv.substr(eq + 1), where, line);
  }
  return root;
}

inline TomlTable read_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  return parse_toml(in, path);
}

}  // namespace pfsel
