#include "radx/table.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "radx/common.hpp"
#include "radx/csv.hpp"

namespace radx {

using nlohmann::json;

FeatureTable::FeatureTable(std::vector<std::string> ids, std::vector<Column> columns,
                           Eigen::MatrixXd values)
    : ids_(std::move(ids)), columns_(std::move(columns)), values_(std::move(values)) {
  if (values_.rows() != static_cast<Eigen::Index>(ids_.size()) ||
      values_.cols() != static_cast<Eigen::Index>(columns_.size())) {
    throw InputError("feature table shape does not match ids/columns");
  }
  std::set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw InputError("duplicate patient_id " + id);
  }
  seen.clear();
  for (const auto& c : columns_) {
    if (!seen.insert(c.name).second) throw InputError("duplicate column " + c.name);
  }
  for (Eigen::Index j = 0; j < values_.cols(); ++j) {
    const auto& col = columns_[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      const double v = values_(i, j);
      if (!std::isfinite(v)) throw InputError("non-finite value in column " + col.name);
      if (col.kind == FeatureKind::categorical && v != std::round(v)) {
        throw InputError("categorical column " + col.name + " holds a non-integer code");
      }
    }
  }
}

FeatureTable FeatureTable::from_vectors(const std::vector<FeatureVector>& rows,
                                        const std::set<std::string>& categorical,
                                        const std::set<std::string>& external) {
  if (rows.empty()) throw InputError("no feature vectors to tabulate");
  const auto names = rows.front().names();
  std::vector<Column> columns;
  for (const auto& n : names) {
    columns.push_back({n, categorical.count(n) ? FeatureKind::categorical : FeatureKind::continuous,
                       external.count(n) ? Provenance::external : Provenance::computed});
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].names() != names) {
      throw InputError("feature vector for " + rows[i].patient_id() + " has a different roster");
    }
    ids.push_back(rows[i].patient_id());
    for (std::size_t j = 0; j < names.size(); ++j) {
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].entries()[j].second;
    }
  }
  return FeatureTable(std::move(ids), std::move(columns), std::move(values));
}

std::optional<std::size_t> FeatureTable::find(const std::string& name) const {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].name == name) return j;
  }
  return std::nullopt;
}

std::size_t FeatureTable::index_of(const std::string& name) const {
  if (auto j = find(name)) return *j;
  throw InputError("feature table has no column " + name);
}

std::vector<std::string> FeatureTable::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

std::vector<std::string> FeatureTable::continuous_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns_) {
    if (c.kind == FeatureKind::continuous) out.push_back(c.name);
  }
  return out;
}

FeatureTable FeatureTable::select_columns(const std::vector<std::string>& names) const {
  std::vector<Column> cols;
  Eigen::MatrixXd vals(values_.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::size_t j = index_of(names[k]);
    cols.push_back(columns_[j]);
    vals.col(static_cast<Eigen::Index>(k)) = values_.col(static_cast<Eigen::Index>(j));
  }
  return FeatureTable(ids_, std::move(cols), std::move(vals));
}

FeatureTable FeatureTable::select_rows(const std::vector<std::size_t>& rows) const {
  std::vector<std::string> ids;
  Eigen::MatrixXd vals(static_cast<Eigen::Index>(rows.size()), values_.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= ids_.size()) throw InputError("row index out of range");
    ids.push_back(ids_[rows[k]]);
    vals.row(static_cast<Eigen::Index>(k)) = values_.row(static_cast<Eigen::Index>(rows[k]));
  }
  return FeatureTable(std::move(ids), columns_, std::move(vals));
}

std::vector<std::string> FeatureTable::constant_columns() const {
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < values_.cols(); ++j) {
    if (values_.rows() == 0) break;
    const double first = values_(0, j);
    if ((values_.col(j).array() == first).all()) out.push_back(columns_[static_cast<std::size_t>(j)].name);
  }
  return out;
}

namespace {

const char* kind_name(FeatureKind k) { return k == FeatureKind::continuous ? "continuous" : "categorical"; }
const char* provenance_name(Provenance p) { return p == Provenance::computed ? "computed" : "external"; }

}  // namespace

void write_table(const FeatureTable& table, const std::filesystem::path& csv_path,
                 const std::filesystem::path& metadata_path) {
  CsvWriter csv(csv_path);
  csv.cell("patient_id");
  for (const auto& c : table.columns()) csv.cell(c.name);
  csv.end_row();
  for (std::size_t i = 0; i < table.rows(); ++i) {
    csv.cell(table.ids()[i]);
    for (std::size_t j = 0; j < table.cols(); ++j) {
      const double v = table.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (table.columns()[j].kind == FeatureKind::categorical) {
        csv.cell(static_cast<long long>(v));
      } else {
        csv.cell(v);
      }
    }
    csv.end_row();
  }

  json meta;
  meta["columns"] = json::array();
  for (const auto& c : table.columns()) {
    meta["columns"].push_back(
        {{"name", c.name}, {"kind", kind_name(c.kind)}, {"provenance", provenance_name(c.provenance)}});
  }
  std::ofstream out(metadata_path);
  if (!out) throw InputError("cannot write " + metadata_path.string());
  out << meta.dump(2) << '\n';
}

FeatureTable ingest_table(const std::filesystem::path& csv_path,
                          const std::filesystem::path& metadata_path,
                          std::vector<std::string>* warnings) {
  std::map<std::string, Column> declared;
  {
    std::ifstream in(metadata_path);
    if (!in) throw InputError("cannot open metadata " + metadata_path.string());
    json meta;
    try {
      in >> meta;
      for (const auto& entry : meta.at("columns")) {
        Column c;
        c.name = entry.at("name").get<std::string>();
        const auto kind = entry.at("kind").get<std::string>();
        if (kind != "continuous" && kind != "categorical") {
          throw InputError("column " + c.name + " has unknown kind " + kind);
        }
        c.kind = kind == "continuous" ? FeatureKind::continuous : FeatureKind::categorical;
        c.provenance = entry.value("provenance", std::string("computed")) == "external"
                           ? Provenance::external
                           : Provenance::computed;
        declared[c.name] = c;
      }
    } catch (const json::exception& e) {
      throw InputError("malformed metadata " + metadata_path.string() + ": " + e.what());
    }
  }

  const auto rows = read_csv(csv_path);
  if (rows.empty()) throw InputError("feature CSV " + csv_path.string() + " is empty");
  const auto& header = rows.front();
  if (header.empty() || header.front() != "patient_id") {
    throw InputError("feature CSV must start with a patient_id column");
  }
  std::vector<Column> columns;
  for (std::size_t j = 1; j < header.size(); ++j) {
    const auto it = declared.find(header[j]);
    if (it == declared.end()) throw InputError("column " + header[j] + " is missing from metadata");
    columns.push_back(it->second);
  }
  std::vector<std::string> ids;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != header.size()) {
      throw InputError("row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                       " cells, expected " + std::to_string(header.size()));
    }
    ids.push_back(row[0]);
    for (std::size_t j = 1; j < row.size(); ++j) {
      values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) =
          parse_double(row[j], "patient " + row[0] + ", column " + header[j]);
    }
  }
  FeatureTable table(std::move(ids), std::move(columns), std::move(values));
  if (warnings) {
    for (const auto& name : table.constant_columns()) warnings->push_back("constant column " + name);
  }
  return table;
}

}  // namespace radx
