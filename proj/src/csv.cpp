#include "radx/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "radx/common.hpp"

namespace radx {

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<CsvRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    CsvRow row;
    std::string cell;
    std::istringstream fields(line);
    while (std::getline(fields, cell, ',')) row.push_back(cell);
    if (line.back() == ',') row.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_double(const std::string& cell, const std::string& context) {
  if (cell.empty()) throw InputError("empty numeric cell (" + context + ")");
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(value)) {
    throw InputError("non-numeric cell '" + cell + "' (" + context + ")");
  }
  return value;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw InputError("cannot write " + path.string());
}

CsvWriter& CsvWriter::cell(const std::string& text) {
  if (!first_) out_ << ',';
  out_ << text;
  first_ = false;
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_double(value)); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (const auto& c : cells) cell(c);
  end_row();
}

}  // namespace radx
