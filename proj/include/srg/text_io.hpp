#pragma once

// Helpers for the tab-separated text formats. Line numbers are 1-based.

#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "srg/errors.hpp"

namespace srg::io {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find('\t', pos);
    out.push_back(line.substr(pos, next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

[[noreturn]] inline void fail_line(const std::string& source, std::size_t line_no, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line_no) + ": " + what, line_no);
}

inline std::size_t parse_index(const std::string& field, const std::string& what, const std::string& source,
                               std::size_t line_no) {
  std::size_t v = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end) fail_line(source, line_no, "bad " + what + " '" + field + "'");
  return v;
}

inline double parse_real(const std::string& field, const std::string& what, const std::string& source,
                         std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    fail_line(source, line_no, "bad " + what + " '" + field + "'");
  }
  return v;
}

/// Calls fn(line_no, fields) for each non-blank line not starting with '#'.
template <typename Fn>
void for_each_record(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fn(line_no, split_tabs(line));
  }
}

}  // namespace srg::io
