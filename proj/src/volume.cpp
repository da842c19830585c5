#include "radx/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

#include <json.hpp>

#include "radx/common.hpp"

namespace radx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_dims(const Dims& dims) {
  if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
    throw InputError("volume dimensions must be positive");
  }
}

}  // namespace

VoxelGrid::VoxelGrid(Dims dims, Spacing spacing, std::vector<double> values)
    : dims_(dims), spacing_(spacing), values_(std::move(values)) {
  check_dims(dims_);
  if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0)) {
    throw InputError("voxel spacing must be positive");
  }
  if (values_.size() != dims_.count()) {
    throw InputError("voxel count " + std::to_string(values_.size()) +
                     " does not match dims (" + std::to_string(dims_.count()) + ")");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw InputError("non-finite intensity in volume");
  }
}

RoiMask::RoiMask(Dims dims, std::vector<std::uint8_t> inside)
    : dims_(dims), inside_(std::move(inside)) {
  check_dims(dims_);
  if (inside_.size() != dims_.count()) throw InputError("mask size does not match dims");
  for (auto& v : inside_) {
    if (v > 1) throw InputError("mask values must be 0 or 1");
    voxel_count_ += v;
  }
}

std::vector<std::size_t> RoiMask::indices() const {
  std::vector<std::size_t> out;
  out.reserve(voxel_count_);
  for (std::size_t i = 0; i < inside_.size(); ++i) {
    if (inside_[i]) out.push_back(i);
  }
  return out;
}

QuantizedVolume::QuantizedVolume(Dims dims, int grey_levels, std::vector<int> levels,
                                 double min_value, double max_value)
    : dims_(dims),
      grey_levels_(grey_levels),
      levels_(std::move(levels)),
      min_value_(min_value),
      max_value_(max_value) {
  check_dims(dims_);
  if (grey_levels_ < 2) throw InputError("at least 2 grey levels are required");
  if (levels_.size() != dims_.count()) throw InputError("level array does not match dims");
  for (int level : levels_) {
    if (level < 0 || level > grey_levels_) throw InputError("grey level out of range");
    if (level > 0) ++voxel_count_;
  }
}

const std::array<std::array<int, 3>, 13>& half_neighbourhood() {
  static const std::array<std::array<int, 3>, 13> offsets = {{
      {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, -1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 0, -1},
      {0, 1, 1}, {0, 1, -1}, {1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {1, -1, -1},
  }};
  return offsets;
}

// --- I/O ------------------------------------------------------------------

namespace {

struct Header {
  Dims dims;
  Spacing spacing;
  std::string dtype;
  fs::path payload;
};

Header read_header(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw InputError("cannot open volume header " + header_path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw InputError("malformed volume header " + header_path.string() + ": " + e.what());
  }
  Header h;
  try {
    const auto dims = doc.at("dims").get<std::vector<int>>();
    const auto spacing = doc.at("spacing_mm").get<std::vector<double>>();
    if (dims.size() != 3 || spacing.size() != 3) {
      throw InputError("dims and spacing_mm must have 3 entries");
    }
    h.dims = {dims[0], dims[1], dims[2]};
    h.spacing = {spacing[0], spacing[1], spacing[2]};
    h.dtype = doc.at("dtype").get<std::string>();
    h.payload = doc.contains("payload") ? header_path.parent_path() / doc["payload"].get<std::string>()
                                        : fs::path(header_path).replace_extension(".raw");
  } catch (const json::exception& e) {
    throw InputError("invalid volume header " + header_path.string() + ": " + e.what());
  }
  check_dims(h.dims);
  return h;
}

std::vector<unsigned char> read_payload(const fs::path& path, std::size_t expected_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open payload " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != expected_bytes) {
    throw InputError("payload " + path.string() + " has " + std::to_string(bytes.size()) +
                     " bytes, header implies " + std::to_string(expected_bytes));
  }
  return bytes;
}

void write_header(const fs::path& header_path, const Dims& dims, const Spacing& spacing,
                  const char* dtype) {
  json doc;
  doc["dims"] = {dims.nx, dims.ny, dims.nz};
  doc["spacing_mm"] = {spacing.sx, spacing.sy, spacing.sz};
  doc["dtype"] = dtype;
  std::ofstream out(header_path);
  if (!out) throw InputError("cannot write " + header_path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace

VoxelGrid load_volume(const fs::path& header_path) {
  const Header h = read_header(header_path);
  if (h.dtype != "f32le") throw InputError("volume dtype must be f32le, got " + h.dtype);
  const std::size_t n = h.dims.count();
  const auto bytes = read_payload(h.payload, 4 * n);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t word = 0;
    for (int b = 3; b >= 0; --b) word = (word << 8) | bytes[4 * i + static_cast<std::size_t>(b)];
    values[i] = static_cast<double>(std::bit_cast<float>(word));
  }
  return VoxelGrid(h.dims, h.spacing, std::move(values));
}

void write_volume(const VoxelGrid& grid, const fs::path& header_path) {
  write_header(header_path, grid.dims(), grid.spacing(), "f32le");
  std::ofstream out(fs::path(header_path).replace_extension(".raw"), std::ios::binary);
  std::vector<char> bytes(4 * grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto word = std::bit_cast<std::uint32_t>(static_cast<float>(grid[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((word >> (8 * b)) & 0xffU);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing payload for " + header_path.string());
}

RoiMask load_mask(const fs::path& header_path) {
  const Header h = read_header(header_path);
  if (h.dtype != "u8") throw InputError("mask dtype must be u8, got " + h.dtype);
  auto bytes = read_payload(h.payload, h.dims.count());
  return RoiMask(h.dims, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

void write_mask(const RoiMask& mask, const Spacing& spacing, const fs::path& header_path) {
  write_header(header_path, mask.dims(), spacing, "u8");
  std::ofstream out(fs::path(header_path).replace_extension(".raw"), std::ios::binary);
  out.write(reinterpret_cast<const char*>(mask.inside().data()),
            static_cast<std::streamsize>(mask.inside().size()));
  if (!out) throw InputError("failed writing payload for " + header_path.string());
}

// --- segmentation ---------------------------------------------------------

double fixed_threshold(const VoxelGrid& grid) {
  const std::size_t n = grid.size();
  const std::size_t m = (15 * n + 99) / 100;  // ceil(0.15 n) in exact integer arithmetic
  if (m < 2) {
    throw DegenerateError("lower-15% subsample has " + std::to_string(m) +
                          " voxel(s); at least 2 are required");
  }
  std::vector<double> values = grid.values();
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(m - 1), values.end());
  std::sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(m));
  const double mean = std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(m), 0.0) /
                      static_cast<double>(m);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) ss += (values[i] - mean) * (values[i] - mean);
  return mean + 3.0 * std::sqrt(ss / static_cast<double>(m - 1));
}

std::pair<std::vector<int>, std::vector<std::size_t>> label_components(
    const Dims& dims, const std::vector<std::uint8_t>& foreground) {
  std::vector<int> labels(dims.count(), 0);
  std::vector<std::size_t> sizes{0};
  std::queue<std::size_t> frontier;
  for (std::size_t seed = 0; seed < foreground.size(); ++seed) {
    if (!foreground[seed] || labels[seed] != 0) continue;
    const int label = static_cast<int>(sizes.size());
    std::size_t size = 0;
    labels[seed] = label;
    frontier.push(seed);
    while (!frontier.empty()) {
      const std::size_t cur = frontier.front();
      frontier.pop();
      ++size;
      const auto [x, y, z] = dims.coords(cur);
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dims.contains(x + dx, y + dy, z + dz)) continue;
            const std::size_t nb = dims.index(x + dx, y + dy, z + dz);
            if (foreground[nb] && labels[nb] == 0) {
              labels[nb] = label;
              frontier.push(nb);
            }
          }
        }
      }
    }
    sizes.push_back(size);
  }
  return {std::move(labels), std::move(sizes)};
}

RoiMask segment(const VoxelGrid& grid, double threshold) {
  if (!std::isfinite(threshold)) throw InputError("segmentation threshold must be finite");
  std::vector<std::uint8_t> candidates(grid.size(), 0);
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    candidates[i] = grid[i] > threshold ? 1 : 0;
    any = any || candidates[i];
  }
  if (!any) throw DegenerateError("no voxel exceeds the segmentation threshold");
  const auto [labels, sizes] = label_components(grid.dims(), candidates);
  // max_element returns the first maximum, i.e. the earliest component in scan order.
  const auto keep = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
  std::vector<std::uint8_t> inside(grid.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) inside[i] = labels[i] == keep ? 1 : 0;
  return RoiMask(grid.dims(), std::move(inside));
}

QuantizedVolume quantize_fbn(const VoxelGrid& grid, const RoiMask& mask, int grey_levels) {
  if (grey_levels < 2) throw InputError("quantize_fbn: Q must be at least 2");
  if (!(mask.dims() == grid.dims())) throw InputError("mask dims do not match grid dims");
  if (mask.voxel_count() == 0) throw DegenerateError("quantize_fbn: empty mask");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!mask[i]) continue;
    lo = std::min(lo, grid[i]);
    hi = std::max(hi, grid[i]);
  }
  std::vector<int> levels(grid.size(), 0);
  const double range = hi - lo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!mask[i]) continue;
    if (range > 0.0) {
      const double scaled = std::floor(grey_levels * (grid[i] - lo) / range);
      levels[i] = std::min(grey_levels, static_cast<int>(scaled) + 1);
    } else {
      levels[i] = 1;
    }
  }
  return QuantizedVolume(grid.dims(), grey_levels, std::move(levels), lo, hi);
}

}  // namespace radx
