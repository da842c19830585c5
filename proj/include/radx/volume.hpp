#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace radx {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  /// Linear index, x fastest then y then z.
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const auto x = static_cast<int>(idx % static_cast<std::size_t>(nx));
    const auto rest = idx / static_cast<std::size_t>(nx);
    return {x, static_cast<int>(rest % static_cast<std::size_t>(ny)),
            static_cast<int>(rest / static_cast<std::size_t>(ny))};
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Physical voxel size in millimetres.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double voxel_volume_mm3() const { return sx * sy * sz; }
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// 3D intensity field. Values are non-negative uptake-like intensities.
class VoxelGrid {
 public:
  VoxelGrid(Dims dims, Spacing spacing, std::vector<double> values);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t idx) const { return values_[idx]; }
  double at(int x, int y, int z) const { return values_[dims_.index(x, y, z)]; }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<double> values_;
};

/// Binary volume of interest over a grid.
class RoiMask {
 public:
  RoiMask(Dims dims, std::vector<std::uint8_t> inside);

  const Dims& dims() const { return dims_; }
  const std::vector<std::uint8_t>& inside() const { return inside_; }
  bool operator[](std::size_t idx) const { return inside_[idx] != 0; }
  bool at(int x, int y, int z) const {
    return dims_.contains(x, y, z) && inside_[dims_.index(x, y, z)] != 0;
  }
  std::size_t voxel_count() const { return voxel_count_; }
  /// Linear indices of in-mask voxels in ascending order.
  std::vector<std::size_t> indices() const;

 private:
  Dims dims_;
  std::vector<std::uint8_t> inside_;
  std::size_t voxel_count_ = 0;
};

/// Grey levels 1..Q for in-mask voxels; 0 marks voxels outside the mask.
class QuantizedVolume {
 public:
  QuantizedVolume(Dims dims, int grey_levels, std::vector<int> levels, double min_value,
                  double max_value);

  const Dims& dims() const { return dims_; }
  int grey_levels() const { return grey_levels_; }
  const std::vector<int>& levels() const { return levels_; }
  int operator[](std::size_t idx) const { return levels_[idx]; }
  int at(int x, int y, int z) const {
    return dims_.contains(x, y, z) ? levels_[dims_.index(x, y, z)] : 0;
  }
  std::size_t voxel_count() const { return voxel_count_; }
  double min_value() const { return min_value_; }
  double max_value() const { return max_value_; }

 private:
  Dims dims_;
  int grey_levels_;
  std::vector<int> levels_;
  double min_value_;
  double max_value_;
  std::size_t voxel_count_ = 0;
};

/// The 13 offsets that, together with their negatives, make up the
/// 26-neighbourhood.
const std::array<std::array<int, 3>, 13>& half_neighbourhood();

/// Reads a volume given its JSON header path. The raw payload sits next to
/// the header with extension `.raw`, unless the header names it in "payload".
VoxelGrid load_volume(const std::filesystem::path& header_path);
void write_volume(const VoxelGrid& grid, const std::filesystem::path& header_path);

RoiMask load_mask(const std::filesystem::path& header_path);
void write_mask(const RoiMask& mask, const Spacing& spacing,
                const std::filesystem::path& header_path);

/// mean + 3 sd of the lowest ceil(15%) intensities of the whole grid.
double fixed_threshold(const VoxelGrid& grid);

/// Largest 26-connected component of voxels strictly above `threshold`.
/// Ties between equally large components go to the one whose first voxel
/// comes first in x-fastest order.
RoiMask segment(const VoxelGrid& grid, double threshold);

/// Labels 26-connected components of a binary volume. Returns one label per
/// voxel (0 = background, components numbered from 1 in scan order of their
/// first voxel) together with the component sizes (index 0 unused).
std::pair<std::vector<int>, std::vector<std::size_t>> label_components(
    const Dims& dims, const std::vector<std::uint8_t>& foreground);

/// Fixed bin number requantization of in-mask intensities into Q levels.
QuantizedVolume quantize_fbn(const VoxelGrid& grid, const RoiMask& mask, int grey_levels = 32);

}  // namespace radx
