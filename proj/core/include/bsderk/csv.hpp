#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bsderk {

/// Comma separated table with a header row. No quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based file line of each row, for error messages.
  std::vector<std::size_t> lines;

  /// Index of a header column; throws ParseError (line 1) when absent.
  std::size_t column(const std::string& name) const;
  /// Numeric cell; throws ParseError with the row's line on bad input.
  double number(std::size_t row, std::size_t col) const;
};

/// Throws ParseError with the offending line when a row has the wrong
/// number of fields.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

}  // namespace bsderk
