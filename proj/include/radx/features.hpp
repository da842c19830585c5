#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "radx/volume.hpp"

namespace radx {

/// Ordered name -> value map for one patient. Values are always finite;
/// numerically degenerate features are emitted as 0 and noted in flags().
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::string patient_id) : patient_id_(std::move(patient_id)) {}

  void set(std::string name, double value);
  void append(const FeatureVector& other);
  void flag(std::string note) { flags_.push_back(std::move(note)); }

  bool contains(std::string_view name) const;
  double at(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  const std::vector<std::string>& flags() const { return flags_; }
  const std::string& patient_id() const { return patient_id_; }
  void set_patient_id(std::string id) { patient_id_ = std::move(id); }

 private:
  std::string patient_id_;
  std::vector<std::pair<std::string, double>> entries_;
  std::vector<std::string> flags_;
};

/// Grey-level histogram; p[i - 1] is the probability of level i.
struct Histogram {
  int grey_levels = 0;
  std::vector<double> p;
  std::size_t voxel_count = 0;
};

Histogram histogram(const QuantizedVolume& q);

/// Symmetric grey-level co-occurrence matrix, row-major, normalized to sum 1.
struct GlcmMatrix {
  int grey_levels = 0;
  int distance = 1;
  std::vector<double> p;
  std::size_t pair_count = 0;  ///< ordered pairs counted (twice the neighbour pairs)

  /// Entry for grey levels i, j in 1..Q.
  double operator()(int i, int j) const {
    return p[static_cast<std::size_t>(i - 1) * static_cast<std::size_t>(grey_levels) +
             static_cast<std::size_t>(j - 1)];
  }
};

/// Merged co-occurrence matrix over the 13 unique 3D directions scaled to
/// `distance`, counting both orderings of every in-mask pair.
GlcmMatrix glcm(const QuantizedVolume& q, int distance = 1);

/// A 26-connected region of equal grey level.
struct SizeZone {
  int level = 0;
  std::size_t size = 0;
};

/// Zones in scan order of their first voxel.
std::vector<SizeZone> size_zones(const QuantizedVolume& q);

// Feature families. Each returns a partial vector with fixed names.
FeatureVector intensity_stats(const VoxelGrid& grid, const RoiMask& mask);
FeatureVector histogram_stats(const Histogram& hist);
FeatureVector histogram_stats(const QuantizedVolume& q);
FeatureVector glcm_features(const GlcmMatrix& m);
FeatureVector glszm_features(const QuantizedVolume& q);
FeatureVector morphology_features(const RoiMask& mask, const Spacing& spacing);
FeatureVector gradient_quantiles(const VoxelGrid& grid, const RoiMask& mask,
                                 const std::vector<double>& probs = {0.25, 0.5, 0.75, 0.9});

/// Column name for a gradient quantile, e.g. 0.25 -> "grad_q25".
std::string gradient_feature_name(double prob);

struct ExtractionConfig {
  int grey_levels = 32;
  int glcm_distance = 1;
  std::vector<double> gradient_probs{0.25, 0.5, 0.75, 0.9};
  /// Externally supplied columns appended after the computed families.
  std::vector<std::string> external_columns{"grade", "sex", "age", "h0", "h1"};
  /// When set, every external column must be supplied.
  bool strict = true;
};

/// Names produced by extract_all for `config`, in output order.
std::vector<std::string> feature_roster(const ExtractionConfig& config);

/// All feature families for one study, then the external columns.
FeatureVector extract_all(const VoxelGrid& grid, const RoiMask& mask,
                          const ExtractionConfig& config,
                          const std::map<std::string, double>& external = {},
                          std::string patient_id = {});

}  // namespace radx
