#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "radx/common.hpp"
#include "radx/pipeline.hpp"
#include "radx/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags mirror PipelineConfig fields; anything set here overrides --config.
struct Overrides {
  std::string config;
  std::string table, metadata, volumes, externals, survival, output;
  std::optional<std::uint64_t> seed;
  std::optional<int> grey_levels, glcm_distance;
  std::optional<double> pca_variance, ggm_dot_floor;
  std::optional<bool> xplain_categorical;
  std::optional<std::size_t> kmeans_k, kmeans_restarts, ggm_grid_points;
  std::optional<std::size_t> n_test, folds, repetitions, pc_components;
  std::vector<std::string> features, baseline;

  void attach(CLI::App* app, bool extraction_only) {
    app->add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("-o,--output", output, "output directory");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--volumes", volumes, "volume list CSV (patient_id,volume[,mask])");
    app->add_option("--externals", externals, "externals CSV (patient_id plus columns)");
    app->add_option("--grey-levels", grey_levels, "grey levels Q");
    app->add_option("--glcm-distance", glcm_distance, "GLCM neighbour distance");
    if (extraction_only) return;
    app->add_option("--table", table, "feature table CSV");
    app->add_option("--metadata", metadata, "feature table metadata JSON");
    app->add_option("--survival", survival, "survival CSV (patient_id,time,event)");
    app->add_option("--features", features, "restrict to these columns")->delimiter(',');
    app->add_option("--pca-variance", pca_variance, "variance fraction for retained components");
    app->add_option("--kmeans-k", kmeans_k, "number of feature clusters");
    app->add_option("--kmeans-restarts", kmeans_restarts, "k-means restarts");
    app->add_option("--ggm-grid-points", ggm_grid_points, "GGM penalty grid size");
    app->add_option("--ggm-dot-floor", ggm_dot_floor, "smallest |partial correlation| drawn in ggm.dot");
    app->add_option("--xplain-categorical", xplain_categorical, "use categorical columns as lasso predictors (true/false)");
    app->add_option("--n-test", n_test, "held-out test rows");
    app->add_option("--folds", folds, "CV folds");
    app->add_option("--repetitions", repetitions, "CV repetitions");
    app->add_option("--pc-components", pc_components, "principal components in the Cox model");
    app->add_option("--baseline", baseline, "baseline Cox covariates")->delimiter(',');
  }

  radx::PipelineConfig build() const {
    json j = json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw radx::InputError("malformed config " + config + ": " + e.what());
      }
      // file paths are relative to the config file, flag paths to the working directory
      const fs::path base = fs::path(config).parent_path();
      for (const char* key : {"table", "table_metadata", "volumes", "externals", "survival", "output"})
        if (j.contains(key) && j[key].is_string()) {
          const fs::path p = j[key].get<std::string>();
          if (!p.empty() && p.is_relative() && !base.empty()) j[key] = (base / p).string();
        }
    }
    auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) j[key] = v;
    };
    set("table", table);
    set("table_metadata", metadata);
    set("volumes", volumes);
    set("externals", externals);
    set("survival", survival);
    set("output", output);
    if (!table.empty()) j.erase("volumes");
    if (!volumes.empty()) j.erase("table"), j.erase("table_metadata");
    if (seed) j["seed"] = *seed;
    if (grey_levels) j["grey_levels"] = *grey_levels;
    if (glcm_distance) j["glcm_distance"] = *glcm_distance;
    if (pca_variance) j["pca_variance"] = *pca_variance;
    if (kmeans_k) j["kmeans_k"] = *kmeans_k;
    if (kmeans_restarts) j["kmeans_restarts"] = *kmeans_restarts;
    if (ggm_grid_points) j["ggm_grid_points"] = *ggm_grid_points;
    if (ggm_dot_floor) j["ggm_dot_floor"] = *ggm_dot_floor;
    if (xplain_categorical) j["xplain_categorical"] = *xplain_categorical;
    if (n_test) j["n_test"] = *n_test;
    if (folds) j["folds"] = *folds;
    if (repetitions) j["repetitions"] = *repetitions;
    if (pc_components) j["pc_components"] = *pc_components;
    if (!features.empty()) j["features"] = features;
    if (!baseline.empty()) j["baseline_covariates"] = baseline;
    return radx::config_from_json(j);
  }
};

int run_stages(const Overrides& o, const std::set<std::string>& stages) {
  const radx::PipelineConfig cfg = o.build();
  const radx::PipelineResult r = radx::run_pipeline(cfg, stages);
  for (const auto& s : r.stages) {
    if (s.status == "not_run") continue;
    std::printf("%-10s %s\n", s.name.c_str(), s.status.c_str());
    for (const auto& n : s.notices) std::printf("  note: %s\n", n.c_str());
  }
  if (!r.ok) {
    std::fprintf(stderr, "error: %s\n", r.error.c_str());
    return 1;
  }
  std::printf("outputs in %s (config %s)\n", cfg.output.string().c_str(), r.manifest["config_hash"].get<std::string>().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radiomic feature exploration: extraction, correlation, GGM, PCA, clustering, lasso explanation and survival."};
  app.set_version_flag("--version", radx::kRadxVersion);
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    std::set<std::string> stages;
  };
  const std::vector<Sub> subs{
      {"extract", "extract features from a volume list", {"extract"}},
      {"correlate", "Pearson correlation matrix", {"correlate"}},
      {"ggm", "Gaussian graphical model (graphical lasso, BIC)", {"ggm"}},
      {"pca", "correlation-matrix PCA", {"pca"}},
      {"cluster", "k-means on PCA loadings", {"cluster"}},
      {"xplain", "lasso explanation of every feature by the others", {"xplain"}},
      {"survive", "PC and baseline Cox models, risk split, KM curves", {"survive"}},
      {"run", "every stage in order", {}},
  };
  std::vector<Overrides> overrides(subs.size());
  std::vector<CLI::App*> apps;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    CLI::App* sub = app.add_subcommand(subs[i].name, subs[i].help);
    overrides[i].attach(sub, std::string(subs[i].name) == "extract");
    apps.push_back(sub);
  }

  std::string spec_path, synth_out, mode = "table";
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_patients;
  CLI::App* synth = app.add_subcommand("synth", "write a seeded synthetic cohort");
  synth->add_option("--spec", spec_path, "SynthSpec JSON")->check(CLI::ExistingFile);
  synth->add_option("--mode", mode, "table or image")->check(CLI::IsMember({"table", "image"}));
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--patients", synth_patients, "cohort size");
  synth->add_option("-o,--output", synth_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      json j = json::object();
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        in >> j;
      }
      if (synth->count("--mode") || !j.contains("mode")) j["mode"] = mode;
      if (synth_seed) j["seed"] = *synth_seed;
      if (synth_patients) j["patients"] = *synth_patients;
      if (!j.contains("seed")) throw radx::InputError("synth: a seed is required (--seed or in the spec)");
      const radx::SynthSpec spec = radx::synth_spec_from_json(j);
      for (const auto& p : radx::write_synth(spec, synth_out)) std::printf("wrote %s\n", p.string().c_str());
      return 0;
    }
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (apps[i]->parsed()) return run_stages(overrides[i], subs[i].stages);
  } catch (const radx::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
