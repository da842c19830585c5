#pragma once

// Independent reference implementations used only by the test suites.
// They favour obviously-correct brute force over speed and share no code
// path with the library beyond the basic container types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "radx/common.hpp"
#include "radx/volume.hpp"

namespace oracle {

inline double threshold_by_sort(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto m = static_cast<std::size_t>(std::ceil(0.15 * static_cast<double>(values.size()) - 1e-9));
  double mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) mean += values[i];
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) ss += (values[i] - mean) * (values[i] - mean);
  return mean + 3.0 * std::sqrt(ss / static_cast<double>(m - 1));
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

inline bool adjacent26(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  const int dx = std::abs(a[0] - b[0]);
  const int dy = std::abs(a[1] - b[1]);
  const int dz = std::abs(a[2] - b[2]);
  return std::max({dx, dy, dz}) == 1;
}

/// Connected groups (26-adjacency) of voxels sharing the same key, by
/// all-pairs union-find. Key 0 is background. Returns group sizes keyed by
/// (key, smallest linear index).
inline std::map<std::pair<int, std::size_t>, std::size_t> groups_by_union_find(
    const radx::Dims& dims, const std::vector<int>& keys) {
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] != 0) fg.push_back(i);
  }
  UnionFind uf(keys.size());
  for (std::size_t a = 0; a < fg.size(); ++a) {
    for (std::size_t b = a + 1; b < fg.size(); ++b) {
      if (keys[fg[a]] == keys[fg[b]] && adjacent26(dims.coords(fg[a]), dims.coords(fg[b]))) {
        uf.unite(fg[a], fg[b]);
      }
    }
  }
  std::map<std::pair<int, std::size_t>, std::size_t> out;
  for (std::size_t i : fg) ++out[{keys[i], uf.find(i)}];
  return out;
}

/// Mask of the largest 26-connected supra-threshold component; ties go to
/// the component whose smallest linear index is lowest.
inline std::vector<std::uint8_t> largest_component(const radx::VoxelGrid& grid, double t) {
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] > t) fg.push_back(i);
  }
  UnionFind uf(grid.size());
  for (std::size_t a = 0; a < fg.size(); ++a) {
    for (std::size_t b = a + 1; b < fg.size(); ++b) {
      if (adjacent26(grid.dims().coords(fg[a]), grid.dims().coords(fg[b]))) uf.unite(fg[a], fg[b]);
    }
  }
  std::map<std::size_t, std::size_t> sizes;
  for (std::size_t i : fg) ++sizes[uf.find(i)];
  std::size_t best_root = 0;
  std::size_t best_size = 0;
  for (const auto& [root, size] : sizes) {
    if (size > best_size) {
      best_size = size;
      best_root = root;
    }
  }
  std::vector<std::uint8_t> mask(grid.size(), 0);
  for (std::size_t i : fg) mask[i] = uf.find(i) == best_root ? 1 : 0;
  return mask;
}

/// Co-occurrence counts by enumerating every ordered pair of in-mask voxels
/// and testing whether their displacement is +/- distance * one of the 13 directions.
inline std::vector<double> glcm_by_pairs(const radx::QuantizedVolume& q, int distance) {
  static const int dirs[13][3] = {{1, 0, 0},  {0, 1, 0},  {1, 1, 0},  {1, -1, 0}, {0, 0, 1},
                                  {1, 0, 1},  {1, 0, -1}, {0, 1, 1},  {0, 1, -1}, {1, 1, 1},
                                  {1, 1, -1}, {1, -1, 1}, {1, -1, -1}};
  const int ng = q.grey_levels();
  std::vector<double> counts(static_cast<std::size_t>(ng * ng), 0.0);
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < q.levels().size(); ++i) {
    if (q[i] > 0) in.push_back(i);
  }
  double total = 0.0;
  for (std::size_t a : in) {
    for (std::size_t b : in) {
      const auto pa = q.dims().coords(a);
      const auto pb = q.dims().coords(b);
      const int d[3] = {pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]};
      for (const auto& dir : dirs) {
        const bool plus = d[0] == distance * dir[0] && d[1] == distance * dir[1] && d[2] == distance * dir[2];
        const bool minus = d[0] == -distance * dir[0] && d[1] == -distance * dir[1] && d[2] == -distance * dir[2];
        if (plus || minus) {
          counts[static_cast<std::size_t>((q[a] - 1) * ng + (q[b] - 1))] += 1.0;
          total += 1.0;
        }
      }
    }
  }
  for (auto& c : counts) c /= total;
  return counts;
}

/// The eight co-occurrence features, each as its own explicit double loop.
inline std::map<std::string, double> glcm_features_naive(const std::vector<double>& p, int ng) {
  auto at = [&](int i, int j) { return p[static_cast<std::size_t>((i - 1) * ng + (j - 1))]; };
  std::map<std::string, double> f;
  double mx = 0, con = 0, dis = 0, hom = 0, uni = 0, ent = 0, acor = 0;
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) mx = std::max(mx, at(i, j));
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) con += (i - j) * (i - j) * at(i, j);
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) dis += std::abs(i - j) * at(i, j);
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) hom += at(i, j) / (1.0 + std::abs(i - j));
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) uni += at(i, j) * at(i, j);
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j)
      if (at(i, j) > 0) ent -= at(i, j) * std::log(at(i, j));
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) acor += i * j * at(i, j);
  double mr = 0, mc = 0;
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) {
      mr += i * at(i, j);
      mc += j * at(i, j);
    }
  double vr = 0, vc = 0, cov = 0;
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) {
      vr += (i - mr) * (i - mr) * at(i, j);
      vc += (j - mc) * (j - mc) * at(i, j);
      cov += (i - mr) * (j - mc) * at(i, j);
    }
  f["glcm_max_probability"] = mx;
  f["glcm_contrast"] = con;
  f["glcm_dissimilarity"] = dis;
  f["glcm_homogeneity"] = hom;
  f["glcm_uniformity"] = uni;
  f["glcm_entropy"] = ent;
  f["glcm_autocorrelation"] = acor;
  f["glcm_correlation"] = vr * vc > 1e-28 ? cov / std::sqrt(vr * vc) : 0.0;
  return f;
}

/// Histogram features straight from the definitions.
inline std::map<std::string, double> histogram_features_naive(const radx::QuantizedVolume& q) {
  std::vector<double> lv;
  for (int l : q.levels())
    if (l > 0) lv.push_back(l);
  const double n = static_cast<double>(lv.size());
  std::map<int, double> p;
  for (double l : lv) p[static_cast<int>(l)] += 1.0 / n;
  double mean = std::accumulate(lv.begin(), lv.end(), 0.0) / n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double l : lv) {
    m2 += std::pow(l - mean, 2) / n;
    m3 += std::pow(l - mean, 3) / n;
    m4 += std::pow(l - mean, 4) / n;
  }
  double energy = 0, entropy = 0;
  for (const auto& [level, prob] : p) {
    energy += prob * prob;
    entropy -= prob * std::log(prob);
  }
  std::map<std::string, double> f;
  f["hist_mean"] = mean;
  f["hist_variance"] = m2;
  f["hist_energy"] = energy;
  f["hist_entropy"] = entropy;
  f["hist_skewness"] = m2 > 1e-20 ? m3 / std::pow(m2, 1.5) : 0.0;
  f["hist_kurtosis"] = m2 > 1e-20 ? m4 / (m2 * m2) - 3.0 : 0.0;
  return f;
}

/// Zone percentage and large zone emphasis from union-find zones.
inline std::map<std::string, double> glszm_naive(const radx::QuantizedVolume& q) {
  const auto zones = groups_by_union_find(q.dims(), q.levels());
  double nv = 0;
  double lze = 0;
  for (const auto& [key, size] : zones) {
    nv += static_cast<double>(size);
    lze += static_cast<double>(size * size);
  }
  const double nz = static_cast<double>(zones.size());
  return {{"glszm_zone_percentage", nz / nv}, {"glszm_large_zone_emphasis", lze / nz}};
}

/// Eigenvalues of a symmetric 3x3 matrix by the trigonometric closed form, descending.
inline std::array<double, 3> sym3_eigenvalues(const double a[3][3]) {
  const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
  const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
  const double p2 = std::pow(a[0][0] - q, 2) + std::pow(a[1][1] - q, 2) + std::pow(a[2][2] - q, 2) + 2 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p == 0.0) return {q, q, q};
  double b[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
  const double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                      b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                      b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
  const double r = std::clamp(detb / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2 * p * std::cos(phi);
  const double e3 = q + 2 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  return {e1, 3 * q - e1 - e3, e3};
}

/// Asphericity / elongation / flatness with faces counted on a padded copy
/// of the mask and eigenvalues from the closed form.
inline std::map<std::string, double> morphology_naive(const radx::RoiMask& mask, const radx::Spacing& s) {
  const auto& d = mask.dims();
  const int px = d.nx + 2, py = d.ny + 2, pz = d.nz + 2;
  std::vector<int> pad(static_cast<std::size_t>(px * py * pz), 0);
  auto pidx = [&](int x, int y, int z) { return static_cast<std::size_t>(x + px * (y + py * z)); };
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) pad[pidx(x + 1, y + 1, z + 1)] = mask.at(x, y, z) ? 1 : 0;
  double area = 0;
  for (int z = 0; z + 1 < pz; ++z)
    for (int y = 0; y + 1 < py; ++y)
      for (int x = 0; x + 1 < px; ++x) {
        const int c = pad[pidx(x, y, z)];
        area += (c != pad[pidx(x + 1, y, z)]) * s.sy * s.sz;
        area += (c != pad[pidx(x, y + 1, z)]) * s.sx * s.sz;
        area += (c != pad[pidx(x, y, z + 1)]) * s.sx * s.sy;
      }
  std::vector<std::array<double, 3>> pts;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (mask.at(x, y, z)) pts.push_back({x * s.sx, y * s.sy, z * s.sz});
  const double n = static_cast<double>(pts.size());
  double mu[3] = {0, 0, 0};
  for (const auto& p : pts)
    for (int k = 0; k < 3; ++k) mu[k] += p[k] / n;
  double c[3][3] = {};
  for (const auto& p : pts)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c[i][j] += (p[i] - mu[i]) * (p[j] - mu[j]) / n;
  const auto ev = sym3_eigenvalues(c);
  const double vol = n * s.sx * s.sy * s.sz;
  return {{"morph_asphericity", std::pow(area * area * area / (36 * std::numbers::pi * vol * vol), 1.0 / 3.0) - 1},
          {"morph_elongation", std::sqrt(std::max(0.0, ev[1]) / ev[0])},
          {"morph_flatness", std::sqrt(std::max(0.0, ev[2]) / ev[0])}};
}

/// Gradient-magnitude quantiles: full sort plus explicit interpolation.
inline std::map<std::string, double> gradient_naive(const radx::VoxelGrid& g, const radx::RoiMask& m,
                                                    const std::vector<double>& probs) {
  const auto& d = g.dims();
  double vmax = -1e300;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (m[i]) vmax = std::max(vmax, g[i]);
  std::vector<double> sample;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (!m.at(x, y, z)) continue;
        bool interior = true;
        const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (const auto& o : nb) interior = interior && m.at(x + o[0], y + o[1], z + o[2]);
        if (!interior) continue;
        const double gx = (g.at(x + 1, y, z) - g.at(x - 1, y, z)) / (2 * g.spacing().sx);
        const double gy = (g.at(x, y + 1, z) - g.at(x, y - 1, z)) / (2 * g.spacing().sy);
        const double gz = (g.at(x, y, z + 1) - g.at(x, y, z - 1)) / (2 * g.spacing().sz);
        sample.push_back(std::hypot(gx, gy, gz) / vmax);
      }
  std::sort(sample.begin(), sample.end());
  std::map<std::string, double> out;
  for (double p : probs) {
    const double pos = p * static_cast<double>(sample.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sample.size() - 1);
    out["grad_q" + std::to_string(static_cast<int>(std::lround(p * 100)))] =
        sample[lo] + (pos - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
  }
  return out;
}

/// Random solid region inside an n^3 grid (n <= 8): an ellipsoid with random
/// centre and radii, intensities from a smooth ramp plus noise.
inline std::pair<radx::VoxelGrid, radx::RoiMask> random_region(radx::Rng& rng, int n = 8) {
  const radx::Dims dims{n, n, n};
  const radx::Spacing sp{rng.uniform(0.8, 1.5), rng.uniform(0.8, 1.5), rng.uniform(0.8, 1.5)};
  const double cx = rng.uniform(3.0, n - 4.0), cy = rng.uniform(3.0, n - 4.0), cz = rng.uniform(3.0, n - 4.0);
  const double rx = rng.uniform(2.2, 3.5), ry = rng.uniform(2.2, 3.5), rz = rng.uniform(2.2, 3.5);
  const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), c = rng.uniform(-1, 1);
  std::vector<double> values(dims.count());
  std::vector<std::uint8_t> inside(dims.count());
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const std::size_t i = dims.index(x, y, z);
        values[i] = 5.0 + a * x + b * y + c * z + rng.uniform(0.0, 3.0);
        const double r2 = std::pow((x - cx) / rx, 2) + std::pow((y - cy) / ry, 2) + std::pow((z - cz) / rz, 2);
        inside[i] = r2 <= 1.0 ? 1 : 0;
      }
  return {radx::VoxelGrid(dims, sp, std::move(values)), radx::RoiMask(dims, std::move(inside))};
}

}  // namespace oracle
