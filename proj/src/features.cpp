#include "radx/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include <Eigen/Dense>

#include "radx/common.hpp"

namespace radx {

// --- FeatureVector --------------------------------------------------------

void FeatureVector::set(std::string name, double value) {
  if (!std::isfinite(value)) throw DegenerateError("feature " + name + " is not finite");
  if (contains(name)) throw InputError("duplicate feature name " + name);
  entries_.emplace_back(std::move(name), value);
}

void FeatureVector::append(const FeatureVector& other) {
  for (const auto& [name, value] : other.entries_) set(name, value);
  flags_.insert(flags_.end(), other.flags_.begin(), other.flags_.end());
}

bool FeatureVector::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

double FeatureVector::at(std::string_view name) const {
  for (const auto& [key, value] : entries_) {
    if (key == name) return value;
  }
  throw InputError("no feature named " + std::string(name));
}

std::vector<std::string> FeatureVector::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

namespace {

// Central moments of a weighted sample; weights are normalized internally.
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // excess
  bool degenerate = false;
};

template <typename ValueAt, typename WeightAt>
Moments moments(std::size_t n, ValueAt value, WeightAt weight) {
  Moments m;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m.mean += weight(i) * value(i);
    total += weight(i);
  }
  m.mean /= total;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = value(i) - m.mean;
    const double d2 = d * d;
    m2 += weight(i) * d2;
    m3 += weight(i) * d2 * d;
    m4 += weight(i) * d2 * d2;
  }
  m2 /= total;
  m3 /= total;
  m4 /= total;
  m.variance = m2;
  // Relative floor so that rounding noise on a constant sample counts as zero.
  if (m2 <= 1e-28 * std::max(1.0, m.mean * m.mean)) {
    m.variance = 0.0;
    m.degenerate = true;
    return m;
  }
  m.skewness = m3 / std::pow(m2, 1.5);
  m.kurtosis = m4 / (m2 * m2) - 3.0;
  return m;
}

void require_nonempty(const RoiMask& mask, const char* what) {
  if (mask.voxel_count() == 0) throw DegenerateError(std::string(what) + ": empty mask");
}

}  // namespace

// --- first order ------------------------------------------------------------

FeatureVector intensity_stats(const VoxelGrid& grid, const RoiMask& mask) {
  require_nonempty(mask, "intensity_stats");
  if (!(mask.dims() == grid.dims())) throw InputError("mask dims do not match grid dims");
  std::vector<double> values;
  values.reserve(mask.voxel_count());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (mask[i]) values.push_back(grid[i]);
  }
  const Moments m = moments(
      values.size(), [&](std::size_t i) { return values[i]; }, [](std::size_t) { return 1.0; });
  const double volume_ml =
      static_cast<double>(values.size()) * grid.spacing().voxel_volume_mm3() / 1000.0;

  FeatureVector out;
  out.set("suv_max", *std::max_element(values.begin(), values.end()));
  out.set("suv_mean", m.mean);
  out.set("volume_ml", volume_ml);
  out.set("tlg", m.mean * volume_ml);
  out.set("int_variance", m.variance);
  out.set("int_skewness", m.skewness);
  out.set("int_kurtosis", m.kurtosis);
  if (m.degenerate) out.flag("int_skewness,int_kurtosis: zero variance, emitted as 0");
  return out;
}

Histogram histogram(const QuantizedVolume& q) {
  if (q.voxel_count() == 0) throw DegenerateError("histogram: empty volume");
  Histogram h;
  h.grey_levels = q.grey_levels();
  h.voxel_count = q.voxel_count();
  std::vector<std::size_t> counts(static_cast<std::size_t>(q.grey_levels()), 0);
  for (int level : q.levels()) {
    if (level > 0) ++counts[static_cast<std::size_t>(level - 1)];
  }
  h.p.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    h.p[i] = static_cast<double>(counts[i]) / static_cast<double>(h.voxel_count);
  }
  return h;
}

FeatureVector histogram_stats(const Histogram& hist) {
  const Moments m = moments(
      hist.p.size(), [](std::size_t i) { return static_cast<double>(i + 1); },
      [&](std::size_t i) { return hist.p[i]; });
  double energy = 0.0;
  double entropy = 0.0;
  for (double p : hist.p) {
    energy += p * p;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  FeatureVector out;
  out.set("hist_mean", m.mean);
  out.set("hist_variance", m.variance);
  out.set("hist_energy", energy);
  out.set("hist_entropy", entropy);
  out.set("hist_skewness", m.skewness);
  out.set("hist_kurtosis", m.kurtosis);
  if (m.degenerate) out.flag("hist_skewness,hist_kurtosis: zero variance, emitted as 0");
  return out;
}

FeatureVector histogram_stats(const QuantizedVolume& q) { return histogram_stats(histogram(q)); }

// --- GLCM -------------------------------------------------------------------

GlcmMatrix glcm(const QuantizedVolume& q, int distance) {
  if (distance < 1) throw InputError("GLCM distance must be at least 1");
  const auto ng = static_cast<std::size_t>(q.grey_levels());
  std::vector<std::size_t> counts(ng * ng, 0);
  std::size_t pairs = 0;
  const Dims& dims = q.dims();
  for (std::size_t idx = 0; idx < dims.count(); ++idx) {
    const int a = q[idx];
    if (a == 0) continue;
    const auto [x, y, z] = dims.coords(idx);
    for (const auto& off : half_neighbourhood()) {
      const int b = q.at(x + distance * off[0], y + distance * off[1], z + distance * off[2]);
      if (b == 0) continue;
      ++counts[static_cast<std::size_t>(a - 1) * ng + static_cast<std::size_t>(b - 1)];
      ++counts[static_cast<std::size_t>(b - 1) * ng + static_cast<std::size_t>(a - 1)];
      pairs += 2;
    }
  }
  if (pairs == 0) throw DegenerateError("GLCM: no in-mask neighbour pair at the requested distance");
  GlcmMatrix m;
  m.grey_levels = q.grey_levels();
  m.distance = distance;
  m.pair_count = pairs;
  m.p.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    m.p[i] = static_cast<double>(counts[i]) / static_cast<double>(pairs);
  }
  return m;
}

FeatureVector glcm_features(const GlcmMatrix& m) {
  const int ng = m.grey_levels;
  double max_prob = 0.0;
  double contrast = 0.0;
  double dissimilarity = 0.0;
  double homogeneity = 0.0;
  double uniformity = 0.0;
  double entropy = 0.0;
  double autocorrelation = 0.0;
  std::vector<double> row(static_cast<std::size_t>(ng), 0.0);
  std::vector<double> col(static_cast<std::size_t>(ng), 0.0);
  for (int i = 1; i <= ng; ++i) {
    for (int j = 1; j <= ng; ++j) {
      const double p = m(i, j);
      if (p == 0.0) continue;
      const double diff = std::abs(i - j);
      max_prob = std::max(max_prob, p);
      contrast += diff * diff * p;
      dissimilarity += diff * p;
      homogeneity += p / (1.0 + diff);
      uniformity += p * p;
      entropy -= p * std::log(p);
      autocorrelation += static_cast<double>(i) * j * p;
      row[static_cast<std::size_t>(i - 1)] += p;
      col[static_cast<std::size_t>(j - 1)] += p;
    }
  }
  double mu_r = 0.0;
  double mu_c = 0.0;
  for (int i = 1; i <= ng; ++i) {
    mu_r += i * row[static_cast<std::size_t>(i - 1)];
    mu_c += i * col[static_cast<std::size_t>(i - 1)];
  }
  double var_r = 0.0;
  double var_c = 0.0;
  for (int i = 1; i <= ng; ++i) {
    var_r += (i - mu_r) * (i - mu_r) * row[static_cast<std::size_t>(i - 1)];
    var_c += (i - mu_c) * (i - mu_c) * col[static_cast<std::size_t>(i - 1)];
  }
  const double sigma = std::sqrt(var_r * var_c);

  FeatureVector out;
  out.set("glcm_max_probability", max_prob);
  out.set("glcm_contrast", contrast);
  out.set("glcm_dissimilarity", dissimilarity);
  out.set("glcm_homogeneity", homogeneity);
  out.set("glcm_uniformity", uniformity);
  out.set("glcm_entropy", entropy);
  out.set("glcm_autocorrelation", autocorrelation);
  if (sigma > 1e-14) {
    out.set("glcm_correlation", (autocorrelation - mu_r * mu_c) / sigma);
  } else {
    out.set("glcm_correlation", 0.0);
    out.flag("glcm_correlation: zero marginal variance, emitted as 0");
  }
  return out;
}

// --- GLSZM ------------------------------------------------------------------

std::vector<SizeZone> size_zones(const QuantizedVolume& q) {
  const Dims& dims = q.dims();
  std::vector<std::uint8_t> visited(dims.count(), 0);
  std::vector<SizeZone> zones;
  std::queue<std::size_t> frontier;
  for (std::size_t seed = 0; seed < dims.count(); ++seed) {
    const int level = q[seed];
    if (level == 0 || visited[seed]) continue;
    SizeZone zone{level, 0};
    visited[seed] = 1;
    frontier.push(seed);
    while (!frontier.empty()) {
      const std::size_t cur = frontier.front();
      frontier.pop();
      ++zone.size;
      const auto [x, y, z] = dims.coords(cur);
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (q.at(x + dx, y + dy, z + dz) != level) continue;
            const std::size_t nb = dims.index(x + dx, y + dy, z + dz);
            if (!visited[nb]) {
              visited[nb] = 1;
              frontier.push(nb);
            }
          }
        }
      }
    }
    zones.push_back(zone);
  }
  return zones;
}

FeatureVector glszm_features(const QuantizedVolume& q) {
  if (q.voxel_count() == 0) throw DegenerateError("glszm_features: empty volume");
  const auto zones = size_zones(q);
  double emphasis = 0.0;
  for (const auto& z : zones) emphasis += static_cast<double>(z.size) * static_cast<double>(z.size);
  const auto nz = static_cast<double>(zones.size());
  FeatureVector out;
  out.set("glszm_zone_percentage", nz / static_cast<double>(q.voxel_count()));
  out.set("glszm_large_zone_emphasis", emphasis / nz);
  return out;
}

// --- morphology -----------------------------------------------------------

FeatureVector morphology_features(const RoiMask& mask, const Spacing& spacing) {
  if (mask.voxel_count() < 4) throw DegenerateError("morphology needs at least 4 voxels");
  const Dims& dims = mask.dims();
  const double face_x = spacing.sy * spacing.sz;
  const double face_y = spacing.sx * spacing.sz;
  const double face_z = spacing.sx * spacing.sy;
  double area = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  const auto idx = mask.indices();
  for (std::size_t i : idx) {
    const auto [x, y, z] = dims.coords(i);
    area += face_x * ((mask.at(x - 1, y, z) ? 0 : 1) + (mask.at(x + 1, y, z) ? 0 : 1));
    area += face_y * ((mask.at(x, y - 1, z) ? 0 : 1) + (mask.at(x, y + 1, z) ? 0 : 1));
    area += face_z * ((mask.at(x, y, z - 1) ? 0 : 1) + (mask.at(x, y, z + 1) ? 0 : 1));
    mean += Eigen::Vector3d(x * spacing.sx, y * spacing.sy, z * spacing.sz);
  }
  const auto n = static_cast<double>(idx.size());
  mean /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const auto [x, y, z] = dims.coords(i);
    const Eigen::Vector3d d = Eigen::Vector3d(x * spacing.sx, y * spacing.sy, z * spacing.sz) - mean;
    cov += d * d.transpose();
  }
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  // Eigen returns ascending eigenvalues.
  const double l1 = eig.eigenvalues()(2);
  const double l2 = std::max(0.0, eig.eigenvalues()(1));
  const double l3 = std::max(0.0, eig.eigenvalues()(0));
  if (l2 <= 1e-12 * l1) throw DegenerateError("morphology: voxel centres are collinear");

  const double volume = n * spacing.voxel_volume_mm3();
  FeatureVector out;
  out.set("morph_asphericity",
          std::cbrt(area * area * area / (36.0 * std::numbers::pi * volume * volume)) - 1.0);
  out.set("morph_elongation", std::sqrt(l2 / l1));
  out.set("morph_flatness", std::sqrt(l3 / l1));
  return out;
}

// --- gradients --------------------------------------------------------------

std::string gradient_feature_name(double prob) {
  return "grad_q" + std::to_string(static_cast<int>(std::lround(prob * 100.0)));
}

FeatureVector gradient_quantiles(const VoxelGrid& grid, const RoiMask& mask,
                                 const std::vector<double>& probs) {
  require_nonempty(mask, "gradient_quantiles");
  if (!(mask.dims() == grid.dims())) throw InputError("mask dims do not match grid dims");
  const Dims& dims = grid.dims();
  const Spacing& sp = grid.spacing();
  double suv_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i : mask.indices()) suv_max = std::max(suv_max, grid[i]);
  if (!(suv_max > 0.0)) throw DegenerateError("gradient normalization needs a positive in-mask maximum");

  std::vector<double> sample;
  for (std::size_t i : mask.indices()) {
    const auto [x, y, z] = dims.coords(i);
    const bool interior = mask.at(x - 1, y, z) && mask.at(x + 1, y, z) && mask.at(x, y - 1, z) &&
                          mask.at(x, y + 1, z) && mask.at(x, y, z - 1) && mask.at(x, y, z + 1);
    if (!interior) continue;
    const double gx = (grid.at(x + 1, y, z) - grid.at(x - 1, y, z)) / (2.0 * sp.sx);
    const double gy = (grid.at(x, y + 1, z) - grid.at(x, y - 1, z)) / (2.0 * sp.sy);
    const double gz = (grid.at(x, y, z + 1) - grid.at(x, y, z - 1)) / (2.0 * sp.sz);
    sample.push_back(std::sqrt(gx * gx + gy * gy + gz * gz) / suv_max);
  }
  if (sample.empty()) throw DegenerateError("gradient_quantiles: mask has no interior voxel");
  std::sort(sample.begin(), sample.end());
  FeatureVector out;
  for (double p : probs) out.set(gradient_feature_name(p), quantile_sorted(sample, p));
  return out;
}

// --- assembly ---------------------------------------------------------------

std::vector<std::string> feature_roster(const ExtractionConfig& config) {
  std::vector<std::string> names = {
      "suv_max", "suv_mean", "volume_ml", "tlg", "int_variance", "int_skewness", "int_kurtosis",
      "hist_mean", "hist_variance", "hist_energy", "hist_entropy", "hist_skewness", "hist_kurtosis",
      "glcm_max_probability", "glcm_contrast", "glcm_dissimilarity", "glcm_homogeneity",
      "glcm_uniformity", "glcm_entropy", "glcm_autocorrelation", "glcm_correlation",
      "glszm_zone_percentage", "glszm_large_zone_emphasis",
      "morph_asphericity", "morph_elongation", "morph_flatness"};
  for (double p : config.gradient_probs) names.push_back(gradient_feature_name(p));
  names.insert(names.end(), config.external_columns.begin(), config.external_columns.end());
  return names;
}

FeatureVector extract_all(const VoxelGrid& grid, const RoiMask& mask, const ExtractionConfig& config,
                          const std::map<std::string, double>& external, std::string patient_id) {
  const QuantizedVolume q = quantize_fbn(grid, mask, config.grey_levels);
  FeatureVector out(std::move(patient_id));
  out.append(intensity_stats(grid, mask));
  out.append(histogram_stats(q));
  out.append(glcm_features(glcm(q, config.glcm_distance)));
  out.append(glszm_features(q));
  out.append(morphology_features(mask, grid.spacing()));
  out.append(gradient_quantiles(grid, mask, config.gradient_probs));
  for (const auto& name : config.external_columns) {
    const auto it = external.find(name);
    if (it == external.end()) {
      if (config.strict) throw InputError("missing external column " + name);
      continue;
    }
    out.set(name, it->second);
  }
  return out;
}

}  // namespace radx
