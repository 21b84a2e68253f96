#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tulip {

/// Shortest decimal representation that round-trips to the same double.
void append_double(std::string& out, double value);
std::string format_double(double value);

/// Strict parse of a whole field; throws IoError on trailing garbage.
double parse_double(std::string_view text);
long long parse_integer(std::string_view text);

/// Splits on '\n', dropping a trailing '\r' and empty final lines.
std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');
std::string_view trim(std::string_view text);

std::string read_text_file(const std::string& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_text_file(const std::string& path, std::string_view content);

}  // namespace tulip
