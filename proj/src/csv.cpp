#include "emitterforge/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>

#include "emitterforge/common.hpp"

namespace emitterforge::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::uint64_t line_no) {
  field = trim(field);
  if (field == "nan") return std::nan("");
  if (field == "inf") return INFINITY;
  if (field == "-inf") return -INFINITY;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw FormatError(line_no, "bad number '" + std::string(field) + "'", "line");
  return value;
}

long long parse_int(std::string_view field, std::uint64_t line_no) {
  field = trim(field);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw FormatError(line_no, "bad integer '" + std::string(field) + "'", "line");
  return value;
}

Reader::Reader(std::istream& in, std::vector<std::string> expected_header, std::size_t min_columns)
    : in_(in), columns_(expected_header.size()),
      min_columns_(min_columns == 0 ? expected_header.size() : min_columns) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      comments_.emplace_back(t);
      continue;
    }
    const auto header = split(t);
    if (header.size() < min_columns_ || header.size() > columns_)
      throw FormatError(line_no_, "unexpected header '" + std::string(t) + "'", "line");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] != expected_header[i])
        throw FormatError(line_no_, "expected column '" + expected_header[i] + "', got '" +
                                        header[i] + "'", "line");
    }
    columns_ = header.size();
    return;
  }
  throw FormatError(line_no_, "missing header", "line");
}

bool Reader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      comments_.emplace_back(t);
      continue;
    }
    fields = split(t);
    if (fields.size() != columns_)
      throw FormatError(line_no_, "expected " + std::to_string(columns_) + " fields", "line");
    return true;
  }
  return false;
}

}  // namespace emitterforge::csv
