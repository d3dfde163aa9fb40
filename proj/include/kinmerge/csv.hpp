// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kinmerge {

/// A small comma-separated table: first non-comment line is the header.
/// Lines starting with '#' and blank lines are skipped; fields are trimmed
/// and may be wrapped in double quotes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  /// Column index, or a data error naming the missing column.
  std::size_t require_column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

/// Parses a finite real; empty or malformed text is a data error naming `what`.
double parse_real(std::string_view text, std::string_view what);
std::optional<double> parse_optional_real(std::string_view text, std::string_view what);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace kinmerge
