#pragma once

// CSV contract for experiment outputs: header row, LF line endings, '.'
// decimal separator, doubles with 17 significant digits so that every value
// re-parses to the same bits.

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace pluralis {

using CsvCell = std::variant<double, long long, std::string, bool>;

std::string format_double(double value);
std::string format_cell(const CsvCell& cell);

/// Parses a cell written by format_double; throws InvalidInput otherwise.
double parse_double(const std::string& text);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void add_row(std::vector<CsvCell> row);
  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] const std::string& text() const { return text_; }

  /// Writes the accumulated text in binary mode.
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Throws InvalidInput naming the column when absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
  [[nodiscard]] std::vector<double> numbers(const std::string& name) const;
  [[nodiscard]] std::vector<std::string> strings(const std::string& name) const;
};

/// Reads files produced by CsvWriter (no quoting, no embedded commas).
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace pluralis
