#ifndef SUDOKU_SRC_KV_H_
#define SUDOKU_SRC_KV_H_

// Line reader shared by the key = value file formats.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sudoku/error.h"
#include "sudoku/gf2.h"

namespace sudoku::kv {

struct Entry {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

inline std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Splits into entries; blank lines and '#' comments are dropped.
inline std::vector<Entry> Parse(std::string_view text) {
  std::vector<Entry> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(line_no, "", "expected `key = value`");
    }
    out.push_back({line_no, std::string(Trim(line.substr(0, eq))),
                   std::string(Trim(line.substr(eq + 1)))});
  }
  return out;
}

inline std::int64_t Int(const Entry& e) {
  std::int64_t v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end || e.value.empty()) {
    throw ParseError(e.line, e.key, "expected an integer, got '" + e.value + "'");
  }
  return v;
}

inline std::uint64_t Uint(const Entry& e) {
  std::uint64_t v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end || e.value.empty()) {
    throw ParseError(e.line, e.key,
                     "expected an unsigned integer, got '" + e.value + "'");
  }
  return v;
}

inline double Real(const Entry& e) {
  double v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end || e.value.empty()) {
    throw ParseError(e.line, e.key, "expected a number, got '" + e.value + "'");
  }
  return v;
}

inline BitMask Mask(const Entry& e) {
  auto m = ParseMask(e.value);
  if (!m) throw ParseError(e.line, e.key, "bad hex mask '" + e.value + "'");
  return *m;
}

inline std::vector<std::string> SplitList(std::string_view value) {
  std::vector<std::string> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const std::string_view item = Trim(value.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    value = value.substr(comma + 1);
  }
  return out;
}

inline std::string FormatReal(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, path, "cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace sudoku::kv

#endif  // SUDOKU_SRC_KV_H_
