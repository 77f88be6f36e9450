#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace emitterforge::csv {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

std::vector<std::string> split(std::string_view line, char sep = ',');

double parse_double(std::string_view field, std::uint64_t line_no);
long long parse_int(std::string_view field, std::uint64_t line_no);

/// Reads data rows of a CSV with the given header. Lines starting with '#'
/// and blank lines are skipped. Throws FormatError (offset = 1-based line).
class Reader {
 public:
  Reader(std::istream& in, std::vector<std::string> expected_header,
         std::size_t min_columns = 0);

  bool next(std::vector<std::string>& fields);
  std::uint64_t line_number() const { return line_no_; }
  const std::vector<std::string>& comments() const { return comments_; }

 private:
  std::istream& in_;
  std::size_t columns_;
  std::size_t min_columns_;
  std::uint64_t line_no_ = 0;
  std::vector<std::string> comments_;
};

}  // namespace emitterforge::csv
