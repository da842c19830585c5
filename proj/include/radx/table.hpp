#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radx/features.hpp"

namespace radx {

enum class FeatureKind { continuous, categorical };
enum class Provenance { computed, external };

struct Column {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  Provenance provenance = Provenance::computed;
};

/// N patients x P named features. Categorical columns carry integer codes.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(std::vector<std::string> ids, std::vector<Column> columns, Eigen::MatrixXd values);

  /// Builds a table from per-patient vectors sharing one name order.
  /// Columns named in `categorical` get the categorical kind and those in
  /// `external` the external provenance.
  static FeatureTable from_vectors(const std::vector<FeatureVector>& rows,
                                   const std::set<std::string>& categorical,
                                   const std::set<std::string>& external);

  std::size_t rows() const { return ids_.size(); }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Column>& columns() const { return columns_; }
  const Eigen::MatrixXd& values() const { return values_; }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  bool has(const std::string& name) const { return find(name).has_value(); }
  Eigen::VectorXd column(const std::string& name) const { return values_.col(static_cast<Eigen::Index>(index_of(name))); }

  std::vector<std::string> names() const;
  std::vector<std::string> continuous_names() const;

  FeatureTable select_columns(const std::vector<std::string>& names) const;
  FeatureTable select_rows(const std::vector<std::size_t>& rows) const;

  /// Names of columns whose values are all identical.
  std::vector<std::string> constant_columns() const;

 private:
  std::vector<std::string> ids_;
  std::vector<Column> columns_;
  Eigen::MatrixXd values_;
};

/// Writes the CSV (patient_id first, header row) and the companion JSON
/// metadata listing each column's kind and provenance.
void write_table(const FeatureTable& table, const std::filesystem::path& csv_path,
                 const std::filesystem::path& metadata_path);

/// Reads and validates a table. Constant columns are reported through
/// `warnings` when given; they are kept in the table.
FeatureTable ingest_table(const std::filesystem::path& csv_path,
                          const std::filesystem::path& metadata_path,
                          std::vector<std::string>* warnings = nullptr);

}  // namespace radx
