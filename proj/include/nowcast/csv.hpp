#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nowcast::csv {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view line, char delim = ',');

// Tabular files carry `# key=value` metadata lines ahead of the header row.
using Metadata = std::vector<std::pair<std::string, std::string>>;

void write_metadata(std::ostream& out, const Metadata& meta);

// Reads leading `#` lines into a map and returns the first non-comment line
// (the header) through `header`. `line_no` is left at the header's line.
std::map<std::string, std::string> read_metadata(std::istream& in, std::string& header,
                                                 std::size_t& line_no);

// Shortest round-trip representation of a double.
std::string format_double(double value);

}  // namespace nowcast::csv
