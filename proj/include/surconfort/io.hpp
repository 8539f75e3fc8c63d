#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace surconfort::io {

/// A parsed comma-separated file. Fields are not quoted anywhere in this
/// project, so a plain split is enough.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number of each row in the source file, for error messages.
  std::vector<int> line_numbers;

  /// Index of `name` in the header, or DataError.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);

/// Reads a CSV with a header row. Blank lines and a UTF-8 BOM are skipped.
/// Throws DataError when the file is missing or a row has the wrong arity.
CsvTable read_csv(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

int parse_int(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);

}  // namespace surconfort::io
