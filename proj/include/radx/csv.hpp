#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace radx {

using CsvRow = std::vector<std::string>;

/// Reads a comma-separated file without quoting support. Blank lines are
/// skipped and trailing carriage returns are stripped.
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

double parse_double(const std::string& cell, const std::string& context);

/// Minimal CSV writer; numbers are printed with 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  CsvWriter& cell(const std::string& text);
  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
  void end_row();
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace radx
