#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "radx/common.hpp"
#include "radx/csv.hpp"
#include "radx/pipeline.hpp"
#include "radx/stats.hpp"
#include "radx/survival.hpp"
#include "radx/synth.hpp"

using namespace radx;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("radx_pipe_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

// A table cohort on disk, shared by the cases below.
const fs::path& cohort() {
  static const fs::path dir = [] {
    fs::path d = scratch("cohort");
    SynthSpec s = SynthSpec::defaults("table");
    s.seed = 21;
    write_synth(s, d);
    return d;
  }();
  return dir;
}

PipelineConfig table_config(const fs::path& out, bool with_survival = true) {
  json j{{"table", (cohort() / "table.csv").string()}, {"output", out.string()}, {"seed", 5}};
  if (with_survival) j["survival"] = (cohort() / "survival.csv").string();
  return config_from_json(j);
}

}  // namespace

TEST_CASE("ingest: well-formed, duplicate id, undeclared column") {
  const fs::path d = scratch("ingest");
  put(d / "t.csv", "patient_id,a,b\nP1,1,2\nP2,3,4\nP3,5,7\n");
  put(d / "t.meta.json",
      R"({"columns":[{"name":"a","kind":"continuous","provenance":"computed"},{"name":"b","kind":"categorical","provenance":"external"}]})");
  const FeatureTable t = ingest_table(d / "t.csv", d / "t.meta.json");
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t.columns()[1].kind == FeatureKind::categorical);
  CHECK(t.values()(2, 1) == 7.0);

  put(d / "dup.csv", "patient_id,a,b\nP1,1,2\nP1,3,4\n");
  CHECK_THROWS_WITH_AS(ingest_table(d / "dup.csv", d / "t.meta.json"), doctest::Contains("P1"), InputError);
  put(d / "extra.csv", "patient_id,a,b,zeta\nP1,1,2,3\n");
  CHECK_THROWS_WITH_AS(ingest_table(d / "extra.csv", d / "t.meta.json"), doctest::Contains("zeta"), InputError);
  put(d / "bad.csv", "patient_id,a,b\nP1,x,2\n");
  CHECK_THROWS_AS(ingest_table(d / "bad.csv", d / "t.meta.json"), InputError);
  fs::remove_all(d);
}

TEST_CASE("config: seed mandatory, unknown keys and missing paths rejected") {
  CHECK_THROWS_WITH_AS(config_from_json(json{{"table", "x.csv"}, {"output", "o"}}), doctest::Contains("seed"), InputError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"seed", 1}, {"colour", "red"}}), doctest::Contains("colour"), InputError);
  const PipelineConfig missing = config_from_json(json{{"seed", 1}, {"table", "/nonexistent/t.csv"}, {"output", "o"}});
  CHECK_THROWS_WITH_AS(missing.validate(), doctest::Contains("/nonexistent/t.csv"), InputError);
  const PipelineConfig both = config_from_json(
      json{{"seed", 1}, {"table", (cohort() / "table.csv").string()}, {"volumes", "v.csv"}, {"output", "o"}});
  CHECK_THROWS_AS(both.validate(), InputError);
  PipelineConfig ok = table_config("o");
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.table_metadata == cohort() / "table.meta.json");
}

TEST_CASE("config: relative paths resolve against the config file") {
  const fs::path d = scratch("cfgfile");
  put(d / "cfg.json", R"({"seed": 3, "table": "t.csv", "output": "out"})");
  const PipelineConfig c = load_config(d / "cfg.json");
  CHECK(c.table == d / "t.csv");
  CHECK(c.output == d / "out");
  CHECK(c.seed == 3);
  fs::remove_all(d);
}

TEST_CASE("config hash changes with every field") {
  const PipelineConfig base = table_config("o");
  const std::string h = config_hash(base);
  CHECK(h.size() == 16);
  CHECK(config_hash(table_config("o")) == h);
  const json j = to_json(base);
  CHECK(config_hash(config_from_json(j)) == h);
  for (const auto& [key, value] : j.items()) {
    json m = j;
    if (value.is_boolean()) m[key] = !value.get<bool>();
    else if (value.is_string()) m[key] = value.get<std::string>() + "x";
    else if (value.is_number_float()) m[key] = value.get<double>() * 0.5;
    else if (value.is_number()) m[key] = value.get<long long>() + 1;
    else if (value.is_array()) m[key].push_back(key == "ggm_penalties" ? json(0.5) : json("extra"));
    INFO(key);
    CHECK(config_hash(config_from_json(m)) != h);
  }
}

TEST_CASE("full run: manifest lists the six stages and outputs round-trip") {
  const fs::path out = scratch("full");
  const PipelineConfig cfg = table_config(out);
  const PipelineResult r = run_pipeline(cfg);
  REQUIRE(r.ok);
  CHECK_FALSE(fs::exists(out / "FAILED"));

  std::ifstream mf(out / "manifest.json");
  const json m = json::parse(mf);
  CHECK(m["config_hash"] == config_hash(cfg));
  CHECK(m["seed"] == 5);
  std::vector<std::string> ran;
  for (const auto& s : m["stages"]) {
    if (s["status"] == "not_run") continue;
    CHECK(s["status"] == "ok");
    ran.push_back(s["name"]);
    for (const auto& o : s["outputs"]) CHECK(fs::exists(out / o.get<std::string>()));
  }
  CHECK(ran == std::vector<std::string>{"correlate", "ggm", "pca", "cluster", "xplain", "survive"});

  const FeatureTable table = ingest_table(cohort() / "table.csv", cohort() / "table.meta.json");

  // correlation.csv parses back to the in-memory matrix exactly
  const CorrelationMatrix c = pearson_matrix(table);
  const auto rows = read_csv(out / "correlation.csv");
  REQUIRE(rows.size() == c.names.size() + 1);
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    CHECK(rows[i + 1][0] == c.names[i]);
    for (std::size_t j = 0; j < c.names.size(); ++j)
      CHECK(parse_double(rows[i + 1][j + 1], "r") == c.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  }

  // eigenvalues
  const PcaResult p = pca(table);
  const auto ev = read_csv(out / "pca_eigenvalues.csv");
  REQUIRE(ev.size() == static_cast<std::size_t>(p.eigenvalues.size()) + 1);
  for (Eigen::Index k = 0; k < p.eigenvalues.size(); ++k)
    CHECK(parse_double(ev[static_cast<std::size_t>(k) + 1][1], "ev") == p.eigenvalues(k));

  // each xplain JSON parses and names 2 or 3 predictors
  std::size_t reports = 0;
  for (const auto& e : fs::directory_iterator(out / "xplain")) {
    std::ifstream in(e.path());
    const json rep = json::parse(in);
    CHECK(rep["selected"].size() >= 2);
    CHECK(rep["selected"].size() <= 3);
    CHECK(rep.contains("selection_frequency"));
    ++reports;
  }
  CHECK(reports == table.continuous_names().size());

  // Cox summary CSVs parse and the baseline has its three covariates
  const auto cb = read_csv(out / "cox_baseline.csv");
  REQUIRE(cb.size() == 4);
  CHECK(cb[0] == CsvRow{"covariate", "coef", "se", "z", "p"});
  CHECK(read_csv(out / "cox_pc.csv").size() == 13);
  const SurvivalData surv = align(read_survival(cohort() / "survival.csv"), table.ids());
  const RiskModel base = baseline_model(table, surv);
  for (std::size_t j = 0; j < 3; ++j) CHECK(parse_double(cb[j + 1][1], "coef") == base.cox.coef(static_cast<Eigen::Index>(j)));

  // KM CSV reproduces the low-risk curve
  const auto km = read_csv(out / "km_baseline.csv");
  std::size_t low = 0;
  for (std::size_t i = 1; i < km.size(); ++i)
    if (km[i][0] == "low") {
      CHECK(parse_double(km[i][2], "S") == base.low.survival[low]);
      ++low;
    }
  CHECK(low == base.low.time.size());

  // edges refer to known nodes
  std::ifstream sj(out / "survival_summary.json");
  CHECK(json::parse(sj).contains("pc"));
  for (const auto& row : read_csv(out / "ggm_edges.csv")) CHECK(row.size() == 3);
  fs::remove_all(out);
}

TEST_CASE("rerun with identical config is byte-identical") {
  const fs::path out = scratch("det");
  const PipelineConfig cfg = table_config(out);
  REQUIRE(run_pipeline(cfg).ok);
  const auto first = snapshot(out);
  REQUIRE(run_pipeline(cfg).ok);
  CHECK(snapshot(out) == first);
  CHECK(first.size() > 20);
  fs::remove_all(out);
}

TEST_CASE("stage seeds are independent of which stages run") {
  const fs::path a = scratch("sa"), b = scratch("sb");
  REQUIRE(run_pipeline(table_config(a), {"cluster"}).ok);
  REQUIRE(run_pipeline(table_config(b), {"pca", "cluster", "correlate"}).ok);
  CHECK(slurp(a / "clusters.csv") == slurp(b / "clusters.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("missing survival skips survival with a notice") {
  const fs::path out = scratch("nosurv");
  const PipelineResult r = run_pipeline(table_config(out, false), {"correlate", "pca", "survive"});
  REQUIRE(r.ok);
  for (const auto& s : r.stages) {
    if (s.name == "survive") {
      CHECK(s.status == "skipped");
      REQUIRE(s.notices.size() == 1);
    }
    if (s.name == "correlate" || s.name == "pca") CHECK(s.status == "ok");
  }
  CHECK_FALSE(fs::exists(out / "cox_pc.csv"));
  fs::remove_all(out);
}

TEST_CASE("stage failure leaves a marker and a tagged error") {
  const fs::path out = scratch("fail");
  PipelineConfig cfg = table_config(out);
  cfg.kmeans_k = 500;  // more clusters than features
  const PipelineResult r = run_pipeline(cfg);
  CHECK_FALSE(r.ok);
  CHECK(r.error.rfind("[cluster]", 0) == 0);
  CHECK(fs::exists(out / "FAILED"));
  CHECK(fs::exists(out / "correlation.csv"));  // earlier outputs kept
  std::ifstream mf(out / "manifest.json");
  const json m = json::parse(mf);
  CHECK(m["status"] == "failed");
  for (const auto& s : m["stages"]) {
    if (s["name"] == "cluster") CHECK(s["status"] == "failed");
    if (s["name"] == "xplain") CHECK(s["status"] == "not_run");
  }
  // a later successful run clears the marker
  REQUIRE(run_pipeline(table_config(out), {"correlate"}).ok);
  CHECK_FALSE(fs::exists(out / "FAILED"));
  fs::remove_all(out);
}

TEST_CASE("extraction from a volume list, with and without masks") {
  const fs::path d = scratch("img");
  SynthSpec s = SynthSpec::defaults("image");
  s.patients = 4;
  s.seed = 8;
  write_synth(s, d);
  // drop the mask of the last study so it gets segmented
  auto rows = read_csv(d / "volumes.csv");
  {
    CsvWriter w(d / "volumes.csv");
    w.row(rows[0]);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (i + 1 == rows.size()) rows[i][2] = "";
      w.row(rows[i]);
    }
  }
  const PipelineConfig cfg = config_from_json(
      json{{"volumes", (d / "volumes.csv").string()}, {"externals", (d / "externals.csv").string()}, {"output", (d / "out").string()}, {"seed", 1}});
  std::vector<std::string> notices;
  const FeatureTable t = extract_cohort(cfg, &notices);
  CHECK(t.rows() == 4);
  CHECK(t.cols() == feature_roster(ExtractionConfig{}).size());
  CHECK(t.columns()[t.index_of("grade")].kind == FeatureKind::categorical);
  CHECK(t.columns()[t.index_of("h0")].provenance == Provenance::external);
  bool segmented = false;
  for (const auto& n : notices) segmented |= n.find("P004") != std::string::npos;
  CHECK(segmented);

  const PipelineResult r = run_pipeline(cfg, {"correlate"});
  REQUIRE(r.ok);
  CHECK(r.stages[0].status == "ok");
  const FeatureTable back = ingest_table(d / "out/features.csv", d / "out/features.meta.json");
  CHECK(back.values() == t.values());
  CHECK(back.ids() == t.ids());
  fs::remove_all(d);
}
