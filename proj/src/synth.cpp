#include "radx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "radx/common.hpp"
#include "radx/csv.hpp"
#include "radx/features.hpp"

namespace radx {

namespace {

std::string patient_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%03zu", i + 1);
  return buf;
}

// Latent factor carrying each feature family.
std::size_t family_of(const std::string& name) {
  if (name.rfind("suv_", 0) == 0 || name.rfind("int_", 0) == 0 || name == "tlg") return 0;
  if (name.rfind("hist_", 0) == 0) return 1;
  if (name.rfind("glcm_", 0) == 0) return 2;
  if (name.rfind("glszm_", 0) == 0 || name == "volume_ml") return 3;
  if (name.rfind("morph_", 0) == 0) return 4;
  return 5;
}

double censoring_bound(const std::vector<double>& rate, double target) {
  auto fraction = [&](double c) {
    double s = 0.0;
    for (double r : rate) s += -std::expm1(-r * c) / (r * c);
    return s / static_cast<double>(rate.size());
  };
  double lo = 1e-12, hi = 1e12;
  for (int it = 0; it < 300; ++it) {
    const double mid = std::sqrt(lo * hi);
    (fraction(mid) > target ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

Eigen::VectorXd standardized(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
  if (!(sd > 0.0)) throw InputError("synth: hazard driver has zero variance");
  return (v.array() - mean) / sd;
}

// Separable Gaussian smoothing with clamped borders.
std::vector<double> smooth(const std::vector<double>& in, const Dims& d, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (double& k : kernel) k /= total;
  std::vector<double> a = in, b(in.size());
  const int n[3] = {d.nx, d.ny, d.nz};
  for (int axis = 0; axis < 3; ++axis) {
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          double s = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            int c[3] = {x, y, z};
            c[axis] = std::clamp(c[axis] + k, 0, n[axis] - 1);
            s += kernel[static_cast<std::size_t>(k + radius)] * a[d.index(c[0], c[1], c[2])];
          }
          b[d.index(x, y, z)] = s;
        }
    std::swap(a, b);
  }
  return a;
}

}  // namespace

SynthSpec SynthSpec::defaults(const std::string& mode) {
  SynthSpec s;
  s.mode = mode;
  if (mode == "table") {
    s.dependencies = {
        {"derived_1", {"hist_mean", "hist_variance"}, {0.7, 0.3}, 0.05},
        {"derived_2", {"glcm_contrast", "glcm_homogeneity"}, {1.0, -0.5}, 0.1},
        {"derived_3", {"suv_mean", "volume_ml", "morph_elongation"}, {0.5, 0.3, 0.2}, 0.1},
        {"derived_4", {"glszm_zone_percentage", "grad_q50"}, {0.6, 0.6}, 0.2},
        {"derived_5", {"int_skewness", "h0"}, {1.0, 1.0}, 0.1},
        {"derived_6", {"glcm_entropy", "hist_entropy"}, {0.5, 0.5}, 0.05},
        {"derived_7", {"morph_asphericity", "morph_flatness"}, {0.8, -0.4}, 0.1},
        {"derived_8", {"grad_q90", "h1", "int_kurtosis"}, {0.4, 0.4, 0.4}, 0.2},
    };
    s.hazard = {{"glcm_entropy", 0.7}, {"morph_asphericity", 0.5}};
  } else {
    s.hazard = {{"heterogeneity", 0.8}};
  }
  return s;
}

void SynthSpec::validate() const {
  if (mode != "table" && mode != "image") throw InputError("synth: mode must be 'table' or 'image'");
  if (patients < 2) throw InputError("synth: at least 2 patients are required");
  if (!(censoring >= 0.0 && censoring < 1.0)) throw InputError("synth: censoring fraction must be in [0, 1)");
  if (!(baseline_hazard > 0.0) || !std::isfinite(baseline_hazard)) throw InputError("synth: baseline hazard must be positive");
  for (const auto& [name, coef] : hazard) {
    if (!std::isfinite(coef)) throw InputError("synth: hazard coefficient for " + name + " is not finite");
  }
  for (const auto& d : dependencies) {
    if (d.parents.size() != d.weights.size()) throw InputError("synth: dependency " + d.name + " needs one weight per parent");
    if (!(d.noise_sd >= 0.0)) throw InputError("synth: dependency " + d.name + " has negative noise");
    for (double w : d.weights)
      if (!std::isfinite(w)) throw InputError("synth: dependency " + d.name + " has a non-finite weight");
  }
  if (mode == "image") {
    if (dims.nx < 3 || dims.ny < 3 || dims.nz < 3) throw InputError("synth: grid too small");
    if (!(radius_min > 0.0 && radius_max >= radius_min)) throw InputError("synth: invalid radius range");
    // The jittered centre moves by at most one voxel; keep a one-voxel rim of background.
    const int smallest = std::min({dims.nx, dims.ny, dims.nz});
    if (2.0 * (radius_max + 1.0) + 2.0 >= smallest) throw InputError("synth: blob larger than grid");
    if (!(smoothing_min > 0.0 && smoothing_max >= smoothing_min)) throw InputError("synth: invalid smoothing range");
    if (!(heterogeneity_min >= 0.0 && heterogeneity_max >= heterogeneity_min)) throw InputError("synth: invalid heterogeneity range");
    if (!(uptake_min > background && uptake_max >= uptake_min)) throw InputError("synth: uptake must exceed the background");
    if (!(background >= 0.0)) throw InputError("synth: background must be >= 0");
    if (!(falloff_min >= 0.0 && falloff_max >= falloff_min && falloff_max < 1.0)) throw InputError("synth: falloff must lie in [0, 1)");
    if (!(shape_min > 0.0 && shape_max >= shape_min)) throw InputError("synth: shape must be positive");
  } else if (latent_factors < 1) {
    throw InputError("synth: at least one latent factor is required");
  }
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s = SynthSpec::defaults(j.value("mode", std::string("table")));
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("patients", s.patients);
  get("seed", s.seed);
  if (j.contains("dims")) {
    const auto d = j.at("dims").get<std::vector<int>>();
    if (d.size() != 3) throw InputError("synth: dims needs 3 entries");
    s.dims = {d[0], d[1], d[2]};
  }
  if (j.contains("spacing")) {
    const auto d = j.at("spacing").get<std::vector<double>>();
    if (d.size() != 3) throw InputError("synth: spacing needs 3 entries");
    s.spacing = {d[0], d[1], d[2]};
  }
  get("radius_min", s.radius_min);
  get("radius_max", s.radius_max);
  get("smoothing_min", s.smoothing_min);
  get("smoothing_max", s.smoothing_max);
  get("heterogeneity_min", s.heterogeneity_min);
  get("heterogeneity_max", s.heterogeneity_max);
  get("falloff_min", s.falloff_min);
  get("falloff_max", s.falloff_max);
  get("shape_min", s.shape_min);
  get("shape_max", s.shape_max);
  get("uptake_min", s.uptake_min);
  get("uptake_max", s.uptake_max);
  get("background", s.background);
  get("latent_factors", s.latent_factors);
  get("feature_noise", s.feature_noise);
  get("baseline_hazard", s.baseline_hazard);
  get("censoring", s.censoring);
  if (j.contains("hazard")) s.hazard = j.at("hazard").get<std::map<std::string, double>>();
  if (j.contains("dependencies")) {
    s.dependencies.clear();
    for (const auto& d : j.at("dependencies")) {
      s.dependencies.push_back({d.at("name").get<std::string>(), d.at("parents").get<std::vector<std::string>>(),
                                d.at("weights").get<std::vector<double>>(), d.value("noise_sd", 0.0)});
    }
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json deps = nlohmann::json::array();
  for (const auto& d : s.dependencies) {
    deps.push_back({{"name", d.name}, {"parents", d.parents}, {"weights", d.weights}, {"noise_sd", d.noise_sd}});
  }
  return {{"mode", s.mode},
          {"patients", s.patients},
          {"seed", s.seed},
          {"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
          {"spacing", {s.spacing.sx, s.spacing.sy, s.spacing.sz}},
          {"radius_min", s.radius_min},
          {"radius_max", s.radius_max},
          {"smoothing_min", s.smoothing_min},
          {"smoothing_max", s.smoothing_max},
          {"heterogeneity_min", s.heterogeneity_min},
          {"heterogeneity_max", s.heterogeneity_max},
          {"falloff_min", s.falloff_min},
          {"falloff_max", s.falloff_max},
          {"shape_min", s.shape_min},
          {"shape_max", s.shape_max},
          {"uptake_min", s.uptake_min},
          {"uptake_max", s.uptake_max},
          {"background", s.background},
          {"latent_factors", s.latent_factors},
          {"feature_noise", s.feature_noise},
          {"dependencies", deps},
          {"hazard", s.hazard},
          {"baseline_hazard", s.baseline_hazard},
          {"censoring", s.censoring}};
}

std::vector<std::string> synth_base_columns() {
  ExtractionConfig cfg;
  cfg.external_columns.clear();
  std::vector<std::string> names = feature_roster(cfg);
  names.insert(names.end(), {"age", "h0", "h1"});
  return names;
}

SurvivalData synth_survival(const std::vector<std::string>& ids, const Eigen::VectorXd& eta, double baseline_hazard,
                            double censoring, std::uint64_t seed) {
  if (static_cast<std::size_t>(eta.size()) != ids.size()) throw InputError("synth_survival: length mismatch");
  Rng rng(seed);
  std::vector<double> rate;
  for (Eigen::Index i = 0; i < eta.size(); ++i) rate.push_back(baseline_hazard * std::exp(eta(i)));
  const double bound = censoring > 0.0 ? censoring_bound(rate, censoring) : 0.0;
  SurvivalData s;
  s.ids = ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double t = -std::log1p(-rng.uniform()) / rate[i];
    const double c = censoring > 0.0 ? rng.uniform(0.0, bound) : std::numeric_limits<double>::infinity();
    // Guard the (measure-zero) draw of an exact zero.
    s.time.push_back(std::max(std::min(t, c), std::numeric_limits<double>::min()));
    s.event.push_back(t <= c ? 1 : 0);
  }
  return s;
}

SynthTable synth_table(const SynthSpec& spec) {
  spec.validate();
  if (spec.mode != "table") throw InputError("synth_table: spec mode is not 'table'");
  const std::size_t n = spec.patients;
  const std::vector<std::string> base = synth_base_columns();
  const std::size_t nf = spec.latent_factors;
  Rng rng(derive_seed(spec.seed, "synth.table"));

  struct Loading {
    std::size_t primary, secondary;
    double w1, w2;
  };
  std::vector<Loading> loads;
  for (const auto& name : base) {
    Loading l{family_of(name) % nf, rng.below(nf), rng.uniform(0.6, 1.0), 0.0};
    if (rng.uniform() < 0.5) l.w1 = -l.w1;
    if (rng.uniform() < 0.4 && l.secondary != l.primary) l.w2 = rng.uniform(0.2, 0.5);
    loads.push_back(l);
  }

  std::vector<std::string> names = base;
  std::vector<Column> cols;
  for (const auto& name : base) cols.push_back({name, FeatureKind::continuous,
                                                (name == "age" || name == "h0" || name == "h1") ? Provenance::external : Provenance::computed});
  for (const auto& d : spec.dependencies) {
    if (std::find(names.begin(), names.end(), d.name) != names.end()) throw InputError("synth: dependency " + d.name + " duplicates a column");
    for (const auto& p : d.parents) {
      if (std::find(names.begin(), names.end(), p) == names.end()) throw InputError("synth: dependency " + d.name + " has unknown parent " + p);
    }
    names.push_back(d.name);
    cols.push_back({d.name});
  }
  cols.push_back({"grade", FeatureKind::categorical, Provenance::external});
  cols.push_back({"sex", FeatureKind::categorical, Provenance::external});

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    ids.push_back(patient_id(i));
    std::vector<double> z(nf);
    for (double& v : z) v = rng.normal();
    for (std::size_t j = 0; j < base.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (base[j] == "age") {
        x(ii, jj) = std::round(rng.uniform(25.0, 85.0));
        continue;
      }
      const Loading& l = loads[j];
      x(ii, jj) = 10.0 + l.w1 * z[l.primary] + l.w2 * z[l.secondary] + spec.feature_noise * rng.normal();
    }
    for (std::size_t k = 0; k < spec.dependencies.size(); ++k) {
      const auto& d = spec.dependencies[k];
      double v = 0.0;
      for (std::size_t p = 0; p < d.parents.size(); ++p) {
        const auto col = static_cast<Eigen::Index>(std::find(names.begin(), names.end(), d.parents[p]) - names.begin());
        v += d.weights[p] * x(ii, col);
      }
      if (d.noise_sd > 0.0) v += d.noise_sd * rng.normal();
      x(ii, static_cast<Eigen::Index>(base.size() + k)) = v;
    }
    x(ii, x.cols() - 2) = static_cast<double>(1 + rng.below(3));
    x(ii, x.cols() - 1) = static_cast<double>(rng.below(2));
  }

  SynthTable out{FeatureTable(ids, cols, x), {}};
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (const auto& [name, coef] : spec.hazard) {
    if (!out.table.has(name)) throw InputError("synth: hazard driver " + name + " is not a column");
    eta += coef * standardized(out.table.column(name));
  }
  out.survival = synth_survival(ids, eta, spec.baseline_hazard, spec.censoring, derive_seed(spec.seed, "synth.survival"));
  return out;
}

std::vector<SynthStudy> synth_images(const SynthSpec& spec) {
  spec.validate();
  if (spec.mode != "image") throw InputError("synth_images: spec mode is not 'image'");
  const Dims& d = spec.dims;
  std::vector<SynthStudy> out;
  for (std::size_t i = 0; i < spec.patients; ++i) {
    Rng rng(derive_seed(spec.seed, "synth.image", i));
    const double ra = rng.uniform(spec.radius_min, spec.radius_max);
    const double rb = rng.uniform(spec.radius_min, spec.radius_max);
    const double rc = rng.uniform(spec.radius_min, spec.radius_max);
    const double cx = 0.5 * (d.nx - 1) + rng.uniform(-1, 1);
    const double cy = 0.5 * (d.ny - 1) + rng.uniform(-1, 1);
    const double cz = 0.5 * (d.nz - 1) + rng.uniform(-1, 1);
    const double sigma = rng.uniform(spec.smoothing_min, spec.smoothing_max);
    const double het = rng.uniform(spec.heterogeneity_min, spec.heterogeneity_max);
    const double uptake = rng.uniform(spec.uptake_min, spec.uptake_max);
    const double falloff = rng.uniform(spec.falloff_min, spec.falloff_max);
    const double shape = rng.uniform(spec.shape_min, spec.shape_max);

    std::vector<double> noise(d.count());
    for (double& v : noise) v = rng.normal();
    std::vector<double> field = smooth(noise, d, sigma);
    {
      // symmetric power warp: shape < 1 flattens the tails, > 1 stretches them
      double s2 = 0.0;
      for (double v : field) s2 += v * v;
      const double sd0 = std::sqrt(s2 / static_cast<double>(field.size()));
      for (double& v : field) v = std::copysign(std::pow(std::abs(v) / sd0, shape), v);
    }

    std::vector<double> rho2(d.count());
    std::vector<std::uint8_t> inside(d.count(), 0);
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          const std::size_t k = d.index(x, y, z);
          const double u = (x - cx) / ra, v = (y - cy) / rb, w = (z - cz) / rc;
          rho2[k] = u * u + v * v + w * w;
          if (rho2[k] <= 1.0) {
            inside[k] = 1;
            sum += field[k];
            sq += field[k] * field[k];
            ++count;
          }
        }
    const double mean = sum / static_cast<double>(count);
    const double sd = std::sqrt(std::max(sq / static_cast<double>(count) - mean * mean, 1e-300));
    std::vector<double> values(d.count(), spec.background);
    for (std::size_t k = 0; k < d.count(); ++k) {
      if (inside[k]) {
        const double g = (field[k] - mean) / sd;
        values[k] = std::max(spec.background + 1e-3, uptake * (1.0 - falloff * rho2[k] + het * g));
      }
    }

    SynthStudy s{patient_id(i), VoxelGrid(d, spec.spacing, std::move(values)), RoiMask(d, std::move(inside)), {}, {}};
    s.latent = {{"uptake", uptake}, {"heterogeneity", het}, {"size", ra * rb * rc}, {"smoothing", sigma}, {"falloff", falloff}, {"shape", shape}};
    s.externals = {{"grade", static_cast<double>(1 + rng.below(3))},
                   {"sex", static_cast<double>(rng.below(2))},
                   {"age", std::round(rng.uniform(25.0, 85.0))},
                   {"h0", het + 0.05 * rng.normal()},
                   {"h1", 0.1 * sigma + 0.05 * rng.normal()}};
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::filesystem::path> write_synth(const SynthSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> written;
  if (spec.mode == "table") {
    const SynthTable t = synth_table(spec);
    write_table(t.table, dir / "table.csv", dir / "table.meta.json");
    write_survival(t.survival, dir / "survival.csv");
    written = {dir / "table.csv", dir / "table.meta.json", dir / "survival.csv"};
  } else {
    const auto studies = synth_images(spec);
    fs::create_directories(dir / "studies");
    CsvWriter list(dir / "volumes.csv");
    list.row({"patient_id", "volume", "mask"});
    CsvWriter ext(dir / "externals.csv");
    ext.row({"patient_id", "grade", "sex", "age", "h0", "h1"});
    std::vector<std::string> ids;
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(studies.size()));
    for (const auto& [name, coef] : spec.hazard) {
      if (studies.empty() || !studies[0].latent.count(name)) throw InputError("synth: unknown image hazard driver " + name);
      Eigen::VectorXd v(static_cast<Eigen::Index>(studies.size()));
      for (std::size_t i = 0; i < studies.size(); ++i) v(static_cast<Eigen::Index>(i)) = studies[i].latent.at(name);
      eta += coef * standardized(v);
    }
    for (const auto& s : studies) {
      const std::string vol = "studies/" + s.id + "_volume.json";
      const std::string mask = "studies/" + s.id + "_mask.json";
      write_volume(s.grid, dir / vol);
      write_mask(s.mask, s.grid.spacing(), dir / mask);
      list.row({s.id, vol, mask});
      ext.cell(s.id);
      for (const char* k : {"grade", "sex", "age", "h0", "h1"}) ext.cell(s.externals.at(k));
      ext.end_row();
      ids.push_back(s.id);
    }
    write_survival(synth_survival(ids, eta, spec.baseline_hazard, spec.censoring, derive_seed(spec.seed, "synth.survival")),
                   dir / "survival.csv");
    written = {dir / "volumes.csv", dir / "externals.csv", dir / "survival.csv"};
  }
  std::ofstream(dir / "synth_spec.json") << to_json(spec).dump(2) << "\n";
  written.push_back(dir / "synth_spec.json");
  return written;
}

}  // namespace radx
