#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace overopt::io {

/// Shortest decimal form that round-trips to the same binary64 value.
std::string format_double(double value);

/// Strict parse of a whole field; throws ConfigError(field) on failure.
double parse_double(std::string_view text, const std::string& field);
long long parse_int(std::string_view text, const std::string& field);

std::vector<std::string> split(std::string_view line, char sep);

std::uint64_t fnv1a(std::string_view bytes);
/// 16 hex digits.
std::string hex64(std::uint64_t value);

/// Reads a whole file; throws IncompleteInputError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary file and renames. Throws UsageError when the target is not writable.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Tab- or comma-separated table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index or -1.
  int column(std::string_view name) const;
};

Table parse_table(std::string_view text, char sep);

}  // namespace overopt::io
