#include "radx/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include <Eigen/Core>

#include "radx/common.hpp"
#include "radx/csv.hpp"
#include "radx/stats.hpp"
#include "radx/survival.hpp"
#include "radx/volume.hpp"

namespace radx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void require_file(const fs::path& p, const char* what) {
  if (!p.empty() && !fs::is_regular_file(p)) throw InputError(std::string(what) + " not found: " + p.string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace

void PipelineConfig::validate() const {
  if (table.empty() == volumes.empty()) throw InputError("config: give exactly one of 'table' or 'volumes'");
  if (output.empty()) throw InputError("config: 'output' directory is required");
  require_file(table, "feature table");
  if (!table.empty()) require_file(table_metadata, "table metadata");
  require_file(volumes, "volume list");
  require_file(externals, "externals CSV");
  require_file(survival, "survival CSV");
  if (grey_levels < 2) throw InputError("config: grey_levels must be >= 2");
  if (glcm_distance < 1) throw InputError("config: glcm_distance must be >= 1");
  if (!(pca_variance > 0.0 && pca_variance <= 1.0)) throw InputError("config: pca_variance must lie in (0, 1]");
  if (kmeans_k < 2) throw InputError("config: kmeans_k must be >= 2");
  if (kmeans_restarts < 1) throw InputError("config: kmeans_restarts must be >= 1");
  if (ggm_penalties.empty() && ggm_grid_points < 2) throw InputError("config: ggm_grid_points must be >= 2");
  for (double v : ggm_penalties)
    if (!(v > 0.0)) throw InputError("config: GGM penalties must be positive");
  if (!(ggm_dot_floor >= 0.0)) throw InputError("config: ggm_dot_floor must be >= 0");
  if (pc_components < 1) throw InputError("config: pc_components must be >= 1");
  split.validate();
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  static const std::set<std::string> known{
      "table", "table_metadata", "volumes", "externals", "survival", "output", "seed", "features",
      "external_columns", "categorical", "grey_levels", "glcm_distance", "ggm_penalties", "ggm_grid_points",
      "ggm_dot_floor", "xplain_categorical", "pca_variance", "kmeans_k", "kmeans_restarts", "n_test", "folds", "repetitions", "pc_components",
      "baseline_covariates"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw InputError("config: unknown key '" + key + "'");
  if (!j.contains("seed") || !j.at("seed").is_number_integer())
    throw InputError("config: an integer 'seed' is required");

  PipelineConfig c;
  try {
    auto path = [&](const char* key, fs::path& field) {
      if (j.contains(key)) field = resolve(fs::path(j.at(key).get<std::string>()), base_dir);
    };
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    path("table", c.table);
    path("table_metadata", c.table_metadata);
    path("volumes", c.volumes);
    path("externals", c.externals);
    path("survival", c.survival);
    path("output", c.output);
    get("seed", c.seed);
    get("features", c.features);
    get("external_columns", c.external_columns);
    get("categorical", c.categorical);
    get("grey_levels", c.grey_levels);
    get("glcm_distance", c.glcm_distance);
    get("ggm_penalties", c.ggm_penalties);
    get("ggm_grid_points", c.ggm_grid_points);
    get("ggm_dot_floor", c.ggm_dot_floor);
    get("xplain_categorical", c.xplain_categorical);
    get("pca_variance", c.pca_variance);
    get("kmeans_k", c.kmeans_k);
    get("kmeans_restarts", c.kmeans_restarts);
    get("n_test", c.split.n_test);
    get("folds", c.split.folds);
    get("repetitions", c.split.repetitions);
    get("pc_components", c.pc_components);
    get("baseline_covariates", c.baseline_covariates);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (!c.table.empty() && c.table_metadata.empty()) c.table_metadata = fs::path(c.table).replace_extension(".meta.json");
  c.split.seed = derive_seed(c.seed, "pipeline.xplain");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& c) {
  return json{{"table", c.table.string()},
              {"table_metadata", c.table_metadata.string()},
              {"volumes", c.volumes.string()},
              {"externals", c.externals.string()},
              {"survival", c.survival.string()},
              {"output", c.output.string()},
              {"seed", c.seed},
              {"features", c.features},
              {"external_columns", c.external_columns},
              {"categorical", c.categorical},
              {"grey_levels", c.grey_levels},
              {"glcm_distance", c.glcm_distance},
              {"ggm_penalties", c.ggm_penalties},
              {"ggm_grid_points", c.ggm_grid_points},
              {"ggm_dot_floor", c.ggm_dot_floor},
              {"xplain_categorical", c.xplain_categorical},
              {"pca_variance", c.pca_variance},
              {"kmeans_k", c.kmeans_k},
              {"kmeans_restarts", c.kmeans_restarts},
              {"n_test", c.split.n_test},
              {"folds", c.split.folds},
              {"repetitions", c.split.repetitions},
              {"pc_components", c.pc_components},
              {"baseline_covariates", c.baseline_covariates}};
}

std::string config_hash(const PipelineConfig& config) { return hex64(fnv1a(to_json(config).dump())); }

FeatureTable extract_cohort(const PipelineConfig& config, std::vector<std::string>* notices) {
  const fs::path base = config.volumes.parent_path();
  const auto rows = read_csv(config.volumes);
  if (rows.empty()) throw InputError("volume list " + config.volumes.string() + " is empty");
  const CsvRow& header = rows.front();
  if (header.size() < 2 || header[0] != "patient_id" || header[1] != "volume" ||
      (header.size() == 3 && header[2] != "mask") || header.size() > 3)
    throw InputError("volume list header must be patient_id,volume[,mask]");

  std::map<std::string, std::map<std::string, double>> ext;
  std::vector<std::string> ext_columns;
  if (!config.externals.empty()) {
    const auto erows = read_csv(config.externals);
    if (erows.empty() || erows.front().empty() || erows.front()[0] != "patient_id")
      throw InputError("externals CSV must start with a patient_id column");
    const CsvRow& eh = erows.front();
    for (const auto& name : config.external_columns)
      if (std::find(eh.begin() + 1, eh.end(), name) == eh.end())
        throw InputError("externals CSV lacks column " + name);
    for (std::size_t r = 1; r < erows.size(); ++r) {
      if (erows[r].size() != eh.size()) throw InputError("externals CSV row " + std::to_string(r + 1) + " has the wrong width");
      auto& m = ext[erows[r][0]];
      if (!m.empty()) throw InputError("duplicate patient_id " + erows[r][0] + " in externals CSV");
      for (std::size_t k = 1; k < eh.size(); ++k)
        m[eh[k]] = parse_double(erows[r][k], "externals " + erows[r][0] + "/" + eh[k]);
    }
    ext_columns = config.external_columns;
  }

  ExtractionConfig ecfg;
  ecfg.grey_levels = config.grey_levels;
  ecfg.glcm_distance = config.glcm_distance;
  ecfg.external_columns = ext_columns;

  std::vector<FeatureVector> vectors;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.size() != header.size()) throw InputError("volume list row " + std::to_string(r + 1) + " has the wrong width");
    const std::string& id = row[0];
    if (!seen.insert(id).second) throw InputError("duplicate patient_id " + id + " in volume list");
    const VoxelGrid grid = load_volume(resolve(row[1], base));
    std::optional<RoiMask> mask;
    if (header.size() == 3 && !row[2].empty()) {
      mask = load_mask(resolve(row[2], base));
    } else {
      mask = segment(grid, fixed_threshold(grid));
      if (notices) notices->push_back(id + ": no mask given, segmented at the fixed threshold");
    }
    std::map<std::string, double> e;
    if (!ext_columns.empty()) {
      auto it = ext.find(id);
      if (it == ext.end()) throw InputError("externals CSV has no row for " + id);
      e = it->second;
    }
    FeatureVector f = extract_all(grid, *mask, ecfg, e, id);
    if (notices)
      for (const auto& flag : f.flags()) notices->push_back(id + ": " + flag);
    vectors.push_back(std::move(f));
  }
  const std::set<std::string> cat(config.categorical.begin(), config.categorical.end());
  const std::set<std::string> exn(ext_columns.begin(), ext_columns.end());
  std::set<std::string> cat_present;
  for (const auto& c : cat)
    if (exn.count(c)) cat_present.insert(c);
  return FeatureTable::from_vectors(vectors, cat_present, exn);
}

namespace {

void write_correlation(const CorrelationMatrix& c, const fs::path& path) {
  CsvWriter w(path);
  w.cell("feature");
  for (const auto& n : c.names) w.cell(n);
  w.end_row();
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    w.cell(c.names[i]);
    for (std::size_t j = 0; j < c.names.size(); ++j) w.cell(c.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    w.end_row();
  }
}

void write_ggm(const GgmGraph& g, double dot_floor, const fs::path& dir) {
  {
    CsvWriter w(dir / "ggm_edges.csv");
    w.row({"feature_a", "feature_b", "partial_corr"});
    for (const auto& e : g.edges) {
      w.cell(e.a).cell(e.b).cell(e.partial_correlation);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / "ggm_path.csv");
    w.row({"penalty", "bic", "edges", "converged", "selected"});
    for (const auto& p : g.path) {
      w.cell(p.penalty).cell(p.bic).cell(p.edges).cell(p.converged ? 1 : 0).cell(p.penalty == g.penalty ? 1 : 0);
      w.end_row();
    }
  }
  std::ofstream dot(dir / "ggm.dot");
  dot << "graph ggm {\n";
  for (const auto& n : g.nodes) dot << "  \"" << n << "\";\n";
  for (const auto& e : g.edges)
    if (std::abs(e.partial_correlation) >= dot_floor)
      dot << "  \"" << e.a << "\" -- \"" << e.b << "\" [weight=" << format_double(e.partial_correlation) << "];\n";
  dot << "}\n";
}

void write_pca(const PcaResult& p, const Eigen::MatrixXd& sc, const std::vector<std::string>& ids, const fs::path& dir) {
  const auto P = static_cast<std::size_t>(p.eigenvalues.size());
  {
    CsvWriter w(dir / "pca_eigenvalues.csv");
    w.row({"component", "eigenvalue", "cumulative_variance"});
    for (std::size_t k = 0; k < P; ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      w.cell("PC" + std::to_string(k + 1)).cell(p.eigenvalues(i)).cell(p.cumulative_variance(i));
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / "pca_loadings.csv");
    w.cell("feature");
    for (std::size_t k = 0; k < P; ++k) w.cell("PC" + std::to_string(k + 1));
    w.end_row();
    for (std::size_t j = 0; j < p.names.size(); ++j) {
      w.cell(p.names[j]);
      for (std::size_t k = 0; k < P; ++k) w.cell(p.loadings(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
      w.end_row();
    }
  }
  CsvWriter w(dir / "pca_scores.csv");
  w.cell("patient_id");
  for (Eigen::Index k = 0; k < sc.cols(); ++k) w.cell("PC" + std::to_string(k + 1));
  w.end_row();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.cell(ids[i]);
    for (Eigen::Index k = 0; k < sc.cols(); ++k) w.cell(sc(static_cast<Eigen::Index>(i), k));
    w.end_row();
  }
}

json report_json(const ExplanationReport& r) {
  json sel = json::array();
  for (const auto& s : r.selected)
    sel.push_back({{"name", s.name}, {"coef", s.coef}, {"standardized_coef", s.standardized_coef}, {"frequency", s.frequency}});
  return json{{"dependent", r.dependent},
              {"selected", sel},
              {"intercept", r.intercept},
              {"penalty", r.penalty},
              {"cv_mse", r.cv_mse},
              {"final_cv_mse", r.final_cv_mse},
              {"test_mse", r.test_mse},
              {"test_r2", r.test_r2},
              {"selection_frequency", r.selection_frequency},
              {"fold_selections", r.fold_selections},
              {"degenerate_selection", r.degenerate_selection},
              {"lambda_max", r.lambda_max},
              {"lambda_min", r.lambda_min},
              {"grid_points", r.grid_points}};
}

std::vector<std::string> write_xplain(const std::vector<XplainOutcome>& outcomes, const fs::path& dir) {
  fs::create_directories(dir / "xplain");
  std::vector<std::string> outputs;
  CsvWriter summary(dir / "xplain_summary.csv");
  summary.row({"dependent", "status", "predictors", "cv_mse", "final_cv_mse", "test_mse", "test_r2", "penalty", "error"});
  CsvWriter pred(dir / "xplain_predictions.csv");
  pred.row({"dependent", "patient_id", "observed", "predicted"});
  for (const auto& o : outcomes) {
    summary.cell(o.dependent).cell(o.ok ? "ok" : "failed");
    if (o.ok) {
      const auto& r = o.report;
      std::vector<std::string> names;
      for (const auto& s : r.selected) names.push_back(s.name);
      summary.cell(join(names, ";")).cell(r.cv_mse).cell(r.final_cv_mse).cell(r.test_mse).cell(r.test_r2).cell(r.penalty).cell("");
      const std::string rel = "xplain/" + o.dependent + ".json";
      write_json(report_json(r), dir / rel);
      outputs.push_back(rel);
      for (std::size_t i = 0; i < r.test_ids.size(); ++i) {
        pred.cell(o.dependent).cell(r.test_ids[i]).cell(r.observed[i]).cell(r.predicted[i]);
        pred.end_row();
      }
    } else {
      std::string msg = o.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      summary.cell("").cell("").cell("").cell("").cell("").cell("").cell(msg);
    }
    summary.end_row();
  }
  outputs.push_back("xplain_summary.csv");
  outputs.push_back("xplain_predictions.csv");
  return outputs;
}

void write_cox(const CoxModel& m, const fs::path& path) {
  CsvWriter w(path);
  w.row({"covariate", "coef", "se", "z", "p"});
  for (std::size_t j = 0; j < m.names.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    w.cell(m.names[j]).cell(m.coef(i)).cell(m.se(i)).cell(m.z(i)).cell(m.p(i));
    w.end_row();
  }
}

void write_km(const RiskModel& m, const fs::path& path) {
  CsvWriter w(path);
  w.row({"group", "time", "survival", "at_risk", "events"});
  for (const auto& [group, curve] : {std::pair<const char*, const KmCurve*>{"low", &m.low}, {"high", &m.high}}) {
    for (std::size_t i = 0; i < curve->time.size(); ++i) {
      w.cell(group).cell(curve->time[i]).cell(curve->survival[i]).cell(curve->at_risk[i]).cell(curve->events[i]);
      w.end_row();
    }
  }
}

json risk_summary(const RiskModel& m) {
  const auto& s = m.split;
  const std::size_t high = static_cast<std::size_t>(std::count(s.high.begin(), s.high.end(), true));
  return json{{"covariates", m.cox.names},
              {"concordance", m.cox.concordance},
              {"log_likelihood", m.cox.log_likelihood},
              {"null_log_likelihood", m.cox.null_log_likelihood},
              {"iterations", m.cox.iterations},
              {"converged", m.cox.converged},
              {"tied_event_times", m.cox.tied_event_times},
              {"split",
               {{"percentile", s.percentile},
                {"cutoff", s.cutoff},
                {"logrank_statistic", s.test.statistic},
                {"logrank_p", s.test.p},
                {"optimism_biased", s.optimism_biased},
                {"high", high},
                {"low", s.high.size() - high}}}};
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const std::set<std::string>& stages) {
  PipelineResult result;
  for (const auto& s : stages)
    if (std::find(pipeline_stages().begin(), pipeline_stages().end(), s) == pipeline_stages().end())
      throw InputError("unknown stage '" + s + "'");
  config.validate();
  const fs::path dir = config.output;
  fs::create_directories(dir);
  fs::remove(dir / "FAILED");

  auto wanted = [&](const std::string& s) {
    if (s == "extract") return !config.volumes.empty();
    return stages.empty() || stages.count(s) > 0;
  };
  for (const auto& s : pipeline_stages()) result.stages.push_back({s, wanted(s) ? "pending" : "not_run", {}, {}});
  auto record = [&](const std::string& s) -> StageRecord& {
    return *std::find_if(result.stages.begin(), result.stages.end(), [&](const StageRecord& r) { return r.name == s; });
  };

  std::string current = "ingest";
  FeatureTable table;
  std::optional<PcaResult> pca_result;
  auto analysis_pca = [&]() -> const PcaResult& {
    if (!pca_result) pca_result = pca(table);
    return *pca_result;
  };

  try {
    if (wanted("extract")) {
      current = "extract";
      StageRecord& r = record("extract");
      table = extract_cohort(config, &r.notices);
      write_table(table, dir / "features.csv", dir / "features.meta.json");
      r.outputs = {"features.csv", "features.meta.json"};
      r.status = "ok";
    } else {
      std::vector<std::string> warnings;
      table = ingest_table(config.table, config.table_metadata, &warnings);
    }

    current = "ingest";
    if (!config.features.empty()) {
      std::vector<std::string> keep = config.features;
      for (const auto& n : config.baseline_covariates)
        if (table.has(n) && std::find(keep.begin(), keep.end(), n) == keep.end()) keep.push_back(n);
      table = table.select_columns(keep);
    }
    std::vector<std::string> dropped;
    std::tie(table, dropped) = drop_constant_columns(table);
    if (!dropped.empty()) {
      for (auto& s : result.stages)
        if (s.name != "extract" && s.status == "pending")
          for (const auto& d : dropped) s.notices.push_back("dropped " + d);
    }

    if (wanted("correlate")) {
      current = "correlate";
      write_correlation(pearson_matrix(table), dir / "correlation.csv");
      StageRecord& r = record("correlate");
      r.outputs = {"correlation.csv"};
      r.status = "ok";
    }
    if (wanted("ggm")) {
      current = "ggm";
      std::vector<double> grid = config.ggm_penalties;
      if (grid.empty()) grid = default_penalty_grid(pearson_matrix(table).r, config.ggm_grid_points);
      const GgmGraph g = ggm_fit(table, grid);
      write_ggm(g, config.ggm_dot_floor, dir);
      StageRecord& r = record("ggm");
      r.outputs = {"ggm_edges.csv", "ggm.dot", "ggm_path.csv"};
      r.status = "ok";
    }
    if (wanted("pca")) {
      current = "pca";
      const PcaResult& p = analysis_pca();
      const std::size_t k = components_for_variance(p, config.pca_variance);
      write_pca(p, scores(p, table, k), table.ids(), dir);
      StageRecord& r = record("pca");
      r.outputs = {"pca_eigenvalues.csv", "pca_loadings.csv", "pca_scores.csv"};
      char note[96];
      std::snprintf(note, sizeof note, "%zu components reach variance fraction %g", k, config.pca_variance);
      r.notices.push_back(note);
      r.status = "ok";
    }
    if (wanted("cluster")) {
      current = "cluster";
      LoadingClusterOptions o;
      o.kmeans.k = config.kmeans_k;
      o.kmeans.restarts = config.kmeans_restarts;
      o.kmeans.seed = derive_seed(config.seed, "pipeline.cluster");
      o.variance_fraction = config.pca_variance;
      const ClusterAssignment a = kmeans_loadings(analysis_pca(), o);
      CsvWriter w(dir / "clusters.csv");
      w.row({"feature", "cluster"});
      for (std::size_t i = 0; i < a.names.size(); ++i) {
        w.cell(a.names[i]).cell(a.cluster[i]);
        w.end_row();
      }
      StageRecord& r = record("cluster");
      r.outputs = {"clusters.csv"};
      r.status = "ok";
    }
    if (wanted("xplain")) {
      current = "xplain";
      XplainOptions o;
      o.split = config.split;
      o.include_categorical = config.xplain_categorical;
      const auto outcomes = xplain_all(table, o);
      StageRecord& r = record("xplain");
      r.outputs = write_xplain(outcomes, dir);
      for (const auto& out : outcomes)
        if (!out.ok) r.notices.push_back(out.dependent + ": " + out.error);
      r.status = "ok";
    }
    if (wanted("survive")) {
      current = "survive";
      StageRecord& r = record("survive");
      if (config.survival.empty()) {
        r.status = "skipped";
        r.notices.push_back("no survival CSV configured");
      } else {
        const SurvivalData surv = align(read_survival(config.survival), table.ids());
        const RiskModel pc = pc_risk_model(table, surv, config.pc_components);
        const RiskModel base = baseline_model(table, surv, config.baseline_covariates);
        write_cox(pc.cox, dir / "cox_pc.csv");
        write_cox(base.cox, dir / "cox_baseline.csv");
        write_km(pc, dir / "km_pc.csv");
        write_km(base, dir / "km_baseline.csv");
        json summary{{"patients", surv.size()}, {"events", surv.events()}, {"pc", risk_summary(pc)},
                     {"baseline", risk_summary(base)}};
        write_json(summary, dir / "survival_summary.json");
        r.outputs = {"cox_pc.csv", "cox_baseline.csv", "km_pc.csv", "km_baseline.csv", "survival_summary.json"};
        r.status = "ok";
      }
    }
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = "[" + current + "] " + e.what();
    if (current != "ingest") record(current).status = "failed";
    std::ofstream(dir / "FAILED") << result.error << "\n";
  }

  json st = json::array();
  for (auto& s : result.stages) {
    if (s.status == "pending") s.status = "not_run";
    st.push_back({{"name", s.name}, {"status", s.status}, {"outputs", s.outputs}, {"notices", s.notices}});
  }
  result.manifest = json{{"config_hash", config_hash(config)},
                         {"seed", config.seed},
                         {"config", to_json(config)},
                         {"versions",
                          {{"radx", kRadxVersion},
                           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                         std::to_string(EIGEN_MINOR_VERSION)},
                           {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                 std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                         {"status", result.ok ? "ok" : "failed"},
                         {"error", result.error},
                         {"stages", st}};
  write_json(result.manifest, dir / "manifest.json");
  return result;
}

}  // namespace radx
