#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "radx/features.hpp"
#include "radx/table.hpp"
#include "radx/xplain.hpp"

namespace radx {

inline constexpr const char* kRadxVersion = "0.1.0";

struct PipelineConfig {
  // Inputs: either a feature table or a volume list (patient_id,volume[,mask]).
  std::filesystem::path table;
  std::filesystem::path table_metadata;  ///< defaults to <table stem>.meta.json
  std::filesystem::path volumes;
  std::filesystem::path externals;       ///< patient_id plus external columns
  std::filesystem::path survival;        ///< optional
  std::filesystem::path output;

  std::uint64_t seed = 0;  ///< mandatory in JSON

  /// Restricts the analysed columns; empty keeps every column.
  std::vector<std::string> features;
  std::vector<std::string> external_columns{"grade", "sex", "age", "h0", "h1"};
  std::vector<std::string> categorical{"grade", "sex"};
  int grey_levels = 32;
  int glcm_distance = 1;

  std::vector<double> ggm_penalties;  ///< empty: default grid
  std::size_t ggm_grid_points = 30;
  double ggm_dot_floor = 0.05;        ///< |partial correlation| below this is left out of ggm.dot only
  double pca_variance = 0.95;
  std::size_t kmeans_k = 12;
  std::size_t kmeans_restarts = 20;
  SplitConfig split;                  ///< split.seed is derived from `seed`
  bool xplain_categorical = true;     ///< categorical columns as lasso predictors
  std::size_t pc_components = 12;
  std::vector<std::string> baseline_covariates{"grade", "age", "suv_max"};

  /// Checks ranges and that every referenced input exists.
  void validate() const;
};

/// Relative paths are resolved against `base_dir`. Throws InputError when
/// the seed is missing or a key is unknown.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& config);

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> s{"extract", "correlate", "ggm", "pca", "cluster", "xplain", "survive"};
  return s;
}

struct StageRecord {
  std::string name;
  std::string status;  ///< ok, skipped, failed, not_run
  std::vector<std::string> outputs;  ///< relative to the output directory
  std::vector<std::string> notices;
};

struct PipelineResult {
  bool ok = true;
  std::string error;  ///< "[stage] message"
  std::vector<StageRecord> stages;
  nlohmann::json manifest;
};

/// Runs the selected stages in order (all when `stages` is empty). Extraction
/// runs whenever the input is a volume list. Errors are caught, tagged with
/// the stage, written to FAILED in the output directory and returned.
PipelineResult run_pipeline(const PipelineConfig& config, const std::set<std::string>& stages = {});

/// Reads a volume list, segments studies without a mask and extracts every
/// feature family. Externals come from `config.externals` when set.
FeatureTable extract_cohort(const PipelineConfig& config, std::vector<std::string>* notices = nullptr);

}  // namespace radx
