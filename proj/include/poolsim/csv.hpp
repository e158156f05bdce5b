#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace poolsim::csv {

// A parsed comma-separated file. No quoting: none of our schemas carry
// commas inside fields.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based, parallel to rows

  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;
};

Table read(std::istream& in, std::string source);
Table read_file(const std::string& path);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace poolsim::csv
