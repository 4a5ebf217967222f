#pragma once

// Small helpers shared by the CSV/JSON writers: number formatting and
// line splitting. Output must be byte-stable across runs.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace flowscope::text {

/// Shortest representation that round-trips to the same double.
std::string format_double(double value);

double parse_double(std::string_view field);
long long parse_int(std::string_view field);

std::vector<std::string_view> split(std::string_view line, char sep);

/// Reads a CSV with a header row; returns data rows as string fields.
/// Throws Error{ParseError} when the header does not match `expected_header`.
std::vector<std::vector<std::string>> read_csv(std::istream& in, std::string_view expected_header);

}  // namespace flowscope::text
