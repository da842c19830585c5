#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "radx/survival.hpp"
#include "radx/table.hpp"
#include "radx/volume.hpp"

namespace radx {

/// column = sum_k weights[k] * parents[k] + N(0, noise_sd^2).
struct PlantedDependency {
  std::string name;
  std::vector<std::string> parents;
  std::vector<double> weights;
  double noise_sd = 0.0;
};

struct SynthSpec {
  std::string mode = "table";  ///< "table" or "image"
  std::size_t patients = 130;
  std::uint64_t seed = 0;

  // Image mode: one ellipsoid per patient. Inside, the intensity is
  // uptake * (1 - falloff * rho^2 + heterogeneity * g), rho the normalized
  // ellipsoid radius and g a Gaussian-smoothed unit-variance noise field.
  Dims dims{32, 32, 32};
  Spacing spacing{4.3, 4.3, 4.3};
  double radius_min = 5.0;  ///< semi-axes, in voxels
  double radius_max = 9.0;
  double smoothing_min = 2.5;  ///< Gaussian sd of the texture field, in voxels
  double smoothing_max = 4.0;
  double heterogeneity_min = 0.05;  ///< texture sd relative to uptake
  double heterogeneity_max = 0.25;
  double falloff_min = 0.0;
  double falloff_max = 0.0;
  double shape_min = 0.5;  ///< exponent of a symmetric power warp applied to g
  double shape_max = 1.5;
  double uptake_min = 3.0;
  double uptake_max = 12.0;
  double background = 0.5;

  // Table mode: base columns from a latent factor model plus planted columns.
  std::size_t latent_factors = 6;
  double feature_noise = 0.5;
  std::vector<PlantedDependency> dependencies;

  // Survival: h(t) = baseline_hazard * exp(sum coef * standardized driver).
  // Drivers are table columns in table mode and the per-blob latent
  // parameters (uptake, heterogeneity, size, smoothing, falloff, shape) in image mode.
  std::map<std::string, double> hazard;
  double baseline_hazard = 0.05;
  double censoring = 0.2;  ///< expected censored fraction (uniform censoring)

  /// The defaults used when a JSON spec leaves dependencies/hazard out.
  static SynthSpec defaults(const std::string& mode);
  void validate() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

struct SynthStudy {
  std::string id;
  VoxelGrid grid;
  RoiMask mask;                              ///< the ellipsoid
  std::map<std::string, double> latent;      ///< uptake, heterogeneity, size, smoothing, falloff, shape
  std::map<std::string, double> externals;   ///< grade, sex, age, h0, h1
};

struct SynthTable {
  FeatureTable table;
  SurvivalData survival;
};

/// Base column names of the table mode: the extraction roster's continuous
/// names, then age, h0 and h1.
std::vector<std::string> synth_base_columns();

SynthTable synth_table(const SynthSpec& spec);
std::vector<SynthStudy> synth_images(const SynthSpec& spec);

/// Exponential event times for the linear predictor `eta` with uniform
/// censoring calibrated to the requested expected censored fraction.
SurvivalData synth_survival(const std::vector<std::string>& ids, const Eigen::VectorXd& eta,
                            double baseline_hazard, double censoring, std::uint64_t seed);

/// Writes a cohort to `dir`. Table mode: table.csv, table.meta.json,
/// survival.csv. Image mode: one volume and mask per study under studies/,
/// volumes.csv (patient_id,volume,mask), externals.csv and survival.csv.
std::vector<std::filesystem::path> write_synth(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace radx
