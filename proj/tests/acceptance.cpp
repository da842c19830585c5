// Acceptance criteria AC1..AC11. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails. Pass criterion ids (e.g. AC3)
// as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "radx/common.hpp"
#include "radx/features.hpp"
#include "radx/pipeline.hpp"
#include "radx/stats.hpp"
#include "radx/survival.hpp"
#include "radx/synth.hpp"
#include "radx/xplain.hpp"
#include "sampling.hpp"
#include "survival_oracles.hpp"

using namespace radx;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path workdir() {
  static const fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "radx_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

double worst_error(const FeatureVector& got, const std::map<std::string, double>& expected) {
  double w = 0.0;
  for (const auto& [name, v] : expected) w = std::max(w, std::abs(got.at(name) - v));
  return w;
}

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
  return x;
}

std::vector<std::string> row_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  return ids;
}

// --- criteria ------------------------------------------------------------

Outcome ac1() {
  Rng rng(derive_seed(1, "acceptance.ac1"));
  const std::vector<double> probs{0.25, 0.5, 0.75, 0.9};
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = 6 + static_cast<int>(rng.below(3));
    const auto [g, m] = oracle::random_region(rng, n);
    const QuantizedVolume q = quantize_fbn(g, m, 32);
    worst = std::max(worst, worst_error(histogram_stats(q), oracle::histogram_features_naive(q)));
    worst = std::max(worst, worst_error(glcm_features(glcm(q, 1)), oracle::glcm_features_naive(oracle::glcm_by_pairs(q, 1), 32)));
    worst = std::max(worst, worst_error(glszm_features(q), oracle::glszm_naive(q)));
    worst = std::max(worst, worst_error(morphology_features(m, g.spacing()), oracle::morphology_naive(m, g.spacing())));
    worst = std::max(worst, worst_error(gradient_quantiles(g, m, probs), oracle::gradient_naive(g, m, probs)));
  }
  return {worst <= 1e-10, "max abs error " + fmt("%.3g", worst) + " over 50 regions"};
}

Outcome ac2() {
  Rng rng(derive_seed(1, "acceptance.ac2"));
  std::vector<double> entropy, one_minus_energy;
  for (int k = 0; k < 1000; ++k) {
    const Histogram h{32, testing_support::dirichlet(rng, 0.3, 32), 1000};
    const FeatureVector f = histogram_stats(h);
    entropy.push_back(f.at("hist_entropy"));
    one_minus_energy.push_back(1.0 - f.at("hist_energy"));
  }
  const double rho = testing_support::spearman(entropy, one_minus_energy);
  return {rho > 0.9, "Spearman rho " + fmt("%.4f", rho)};
}

Outcome ac3() {
  const fs::path dir = workdir() / "ac3";
  SynthSpec s = SynthSpec::defaults("image");
  s.seed = 1;
  write_synth(s, dir / "cohort");
  const PipelineConfig cfg = config_from_json(json{{"volumes", (dir / "cohort/volumes.csv").string()},
                                                   {"externals", (dir / "cohort/externals.csv").string()},
                                                   {"output", (dir / "out").string()},
                                                   {"seed", 1}});
  const PipelineResult r = run_pipeline(cfg, {"xplain"});
  if (!r.ok) return {false, r.error};
  std::ifstream in(dir / "out/xplain/glcm_autocorrelation.json");
  const json rep = json::parse(in);
  const std::set<std::string> allowed{"hist_mean", "hist_variance", "hist_energy"};
  bool subset = !rep["selected"].empty();
  std::string names;
  for (const auto& p : rep["selected"]) {
    const std::string n = p["name"];
    subset = subset && allowed.count(n);
    names += (names.empty() ? "" : "+") + n;
  }
  const double r2 = rep["test_r2"];
  return {subset && r2 >= 0.95, "selected " + names + ", test R2 " + fmt("%.4f", r2)};
}

Outcome ac4() {
  int hits = 0, mse_ok = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(derive_seed(1, "acceptance.ac4", static_cast<std::uint64_t>(rep)));
    const Eigen::Index n = 130, decoys = 40;
    Eigen::MatrixXd x = gaussian(rng, n, decoys + 3);
    // sigma = 0.05 sd(Y) with Var(Y) = 0.58 + sigma^2
    const double sigma = std::sqrt(0.0025 * 0.58 / (1.0 - 0.0025));
    for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = 0.7 * x(i, 1) + 0.3 * x(i, 2) + sigma * rng.normal();
    std::vector<Column> cols{{"Y"}, {"A"}, {"B"}};
    for (Eigen::Index d = 0; d < decoys; ++d) cols.push_back({"decoy" + std::to_string(d)});
    const FeatureTable t(row_ids(static_cast<std::size_t>(n)), cols, x);
    XplainOptions o;
    o.split.seed = derive_seed(1, "acceptance.ac4.split", static_cast<std::uint64_t>(rep));
    const ExplanationReport r = xplain_feature(t, "Y", o);
    std::set<std::string> sel;
    for (const auto& p : r.selected) sel.insert(p.name);
    if (sel == std::set<std::string>{"A", "B"}) {
      ++hits;
      mse_ok += r.test_mse <= 2.0 * sigma * sigma;
    }
  }
  return {hits >= 95 && mse_ok == hits,
          std::to_string(hits) + "/100 select {A,B}; test MSE <= 2 sigma^2 in " + std::to_string(mse_ok) + "/" +
              std::to_string(hits) + " of those"};
}

Outcome ac5() {
  Rng rng(derive_seed(1, "acceptance.ac5"));
  Eigen::MatrixXd x = gaussian(rng, 100, 5);
  x.col(1) += 0.5 * x.col(0);
  x.col(4) = 2.0 * x.col(4) + Eigen::VectorXd::Constant(100, 4.0);
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(xc);
  const double cond = svd.singularValues()(0) / svd.singularValues()(4);
  const Eigen::VectorXd y = x * Eigen::Vector<double, 5>(1.0, -0.5, 0.25, 2.0, -1.0) + 0.5 * gaussian(rng, 100, 1).col(0);

  // normal equations with an intercept column
  Eigen::MatrixXd a(100, 6);
  a.col(0).setOnes();
  a.rightCols(5) = x;
  const Eigen::VectorXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  const LassoModel m = lasso_fit(x, y, 0.0);
  const Eigen::VectorXd raw = m.raw_coefficients();
  double err = 0.0;
  for (int j = 0; j < 5; ++j) err = std::max(err, std::abs(raw(j) - beta(j + 1)));

  const double top = lambda_max(x, y);
  bool null_ok = true;
  for (double lam : {top, 1.01 * top, 10.0 * top}) null_ok = null_ok && lasso_fit(x, y, lam).coefficients.isZero(0.0);
  return {cond < 100 && err <= 1e-6 && null_ok,
          "cond " + fmt("%.1f", cond) + ", max |beta - OLS| " + fmt("%.2g", err) + ", null at lambda_max " +
              (null_ok ? "exact" : "violated")};
}

Outcome ac6() {
  int hits = 0;
  const std::vector<std::string> names{"x1", "x2", "x3", "x4", "x5"};
  const std::set<std::pair<std::string, std::string>> truth{{"x1", "x2"}, {"x2", "x3"}, {"x3", "x4"}, {"x4", "x5"}};
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(derive_seed(1, "acceptance.ac6", static_cast<std::uint64_t>(rep)));
    Eigen::MatrixXd x(2000, 5);
    for (Eigen::Index i = 0; i < 2000; ++i) {
      x(i, 0) = rng.normal();
      for (Eigen::Index j = 1; j < 5; ++j) x(i, j) = 0.5 * x(i, j - 1) + rng.normal();
    }
    std::vector<Column> cols;
    for (const auto& n : names) cols.push_back({n});
    const FeatureTable t(row_ids(2000), cols, x);
    const GgmGraph g = ggm_fit(t, default_penalty_grid(pearson_matrix(t).r));
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& e : g.edges) got.insert({e.a, e.b});
    hits += got == truth;
  }
  return {hits >= 90, std::to_string(hits) + "/100 replicates recover exactly the 4 chain edges"};
}

Outcome ac7() {
  SynthSpec s = SynthSpec::defaults("table");
  s.seed = 1;
  const FeatureTable t = synth_table(s).table;
  const PcaResult p = pca(t);
  const auto P = static_cast<double>(p.names.size());
  const double sum_err = std::abs(p.eigenvalues.sum() - P);
  const Eigen::Index k = p.loadings.cols();
  const double ortho = (p.loadings.transpose() * p.loadings - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd r = pearson_matrix(t).r;
  const double recon = (p.loadings * p.eigenvalues.asDiagonal() * p.loadings.transpose() - r).norm();
  return {p.names.size() == 41 && sum_err <= 1e-8 && ortho <= 1e-8 && recon <= 1e-8,
          std::to_string(p.names.size()) + " features; |sum lambda - P| " + fmt("%.2g", sum_err) + ", orthonormality " +
              fmt("%.2g", ortho) + ", reconstruction " + fmt("%.2g", recon)};
}

Outcome ac8() {
  int hits = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(derive_seed(1, "acceptance.ac8", static_cast<std::uint64_t>(rep)));
    Eigen::MatrixXd x(1000, 1);
    for (Eigen::Index i = 0; i < 1000; ++i) x(i, 0) = rng.normal();
    const SurvivalData s = survival_oracle::exponential_cohort(rng, x.col(0), 0.2);
    const CoxModel m = cox_fit(x, {"x"}, s);
    hits += m.coef(0) >= 0.85 && m.coef(0) <= 1.15 && m.concordance >= 0.7;
  }
  Rng rng(derive_seed(1, "acceptance.ac8.grid"));
  Eigen::MatrixXd x(30, 1);
  for (Eigen::Index i = 0; i < 30; ++i) x(i, 0) = rng.normal();
  const SurvivalData s = survival_oracle::exponential_cohort(rng, 0.8 * x.col(0), 0.2);
  const CoxModel m = cox_fit(x, {"x"}, s);
  double best = -1e300;
  for (int k = -40000; k <= 40000; ++k)
    best = std::max(best, survival_oracle::naive_loglik(x, s, Eigen::VectorXd::Constant(1, k * 1e-4)));
  const double gap = std::abs(m.log_likelihood - best);
  return {hits >= 95 && gap <= 1e-4,
          std::to_string(hits) + "/100 with beta in [0.85,1.15] and C >= 0.7; grid-search gap " + fmt("%.2g", gap)};
}

Outcome ac9() {
  Rng rng(derive_seed(1, "acceptance.ac9"));
  std::vector<double> t;
  for (int i = 0; i < 60; ++i) t.push_back(std::round(rng.uniform(1.0, 40.0)));  // with ties
  std::vector<int> all_events(60, 1);
  const SurvivalData s = survival_oracle::make(t, all_events);
  const KmCurve km = km_estimate(s);
  bool km_ok = true;
  for (double u : km.time) {
    double survivors = 0;
    for (double ti : t) survivors += ti > u;
    km_ok = km_ok && km.at(u) == survivors / 60.0;
  }
  for (double u : {0.5, 7.5, 100.0}) {
    double survivors = 0;
    for (double ti : t) survivors += ti > u;
    km_ok = km_ok && km.at(u) == survivors / 60.0;
  }

  std::vector<int> mixed;
  for (int i = 0; i < 60; ++i) mixed.push_back(rng.uniform() < 0.7 ? 1 : 0);
  const SurvivalData sm = survival_oracle::make(t, mixed);
  const double stat = logrank(sm, sm).statistic;

  std::vector<double> distinct;
  for (int i = 0; i < 60; ++i) distinct.push_back(rng.uniform(0.0, 10.0));
  const SurvivalData sd = survival_oracle::make(distinct, mixed);
  Eigen::VectorXd risk(60);
  for (int i = 0; i < 60; ++i) risk(i) = -distinct[static_cast<std::size_t>(i)];
  const double c = concordance(risk, sd);
  return {km_ok && stat == 0.0 && c == 1.0, std::string("KM ") + (km_ok ? "exact" : "mismatch") + ", log-rank on identical groups " +
                                              fmt("%.3g", stat) + ", C(-time) " + fmt("%.17g", c)};
}

PipelineConfig paper_shape_config(const fs::path& dir) {
  SynthSpec s = SynthSpec::defaults("table");
  s.seed = 1;
  if (!fs::exists(dir / "cohort/table.csv")) write_synth(s, dir / "cohort");
  return config_from_json(json{{"table", (dir / "cohort/table.csv").string()},
                               {"survival", (dir / "cohort/survival.csv").string()},
                               {"output", (dir / "out").string()},
                               {"seed", 1}});
}

Outcome ac10() {
  const fs::path dir = workdir() / "ac10";
  const PipelineConfig cfg = paper_shape_config(dir);
  const PipelineResult r = run_pipeline(cfg);
  if (!r.ok) return {false, r.error};
  const fs::path out = cfg.output;
  std::size_t reports = 0, sized = 0;
  for (const auto& e : fs::directory_iterator(out / "xplain")) {
    std::ifstream in(e.path());
    const json rep = json::parse(in);
    ++reports;
    sized += rep["selected"].size() >= 2 && rep["selected"].size() <= 3;
  }
  std::ifstream sj(out / "survival_summary.json");
  const json summary = json::parse(sj);
  const std::size_t pc_coefs = summary["pc"]["covariates"].size();
  const std::size_t base_coefs = summary["baseline"]["covariates"].size();
  const double pc_stat = summary["pc"]["split"]["logrank_statistic"];
  const double base_stat = summary["baseline"]["split"]["logrank_statistic"];
  const bool pass = reports == 41 && sized == 41 && pc_coefs == 12 && base_coefs == 3 && pc_stat > base_stat;
  return {pass, std::to_string(reports) + " reports (" + std::to_string(sized) + " with 2-3 predictors), PC Cox " +
                    std::to_string(pc_coefs) + " coefs, baseline " + std::to_string(base_coefs) + " coefs, log-rank PC " +
                    fmt("%.2f", pc_stat) + " vs baseline " + fmt("%.2f", base_stat)};
}

Outcome ac11() {
  const fs::path dir = workdir() / "ac11";
  const PipelineConfig cfg = paper_shape_config(dir);
  const PipelineResult a = run_pipeline(cfg);
  if (!a.ok) return {false, a.error};
  const auto first = snapshot(cfg.output);
  const PipelineResult b = run_pipeline(cfg);
  if (!b.ok) return {false, b.error};
  const auto second = snapshot(cfg.output);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    differing += it == second.end() || it->second != bytes;
  }
  differing += second.size() - std::min(second.size(), first.size());
  return {differing == 0 && !first.empty(),
          std::to_string(first.size()) + " files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* id;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{{"AC1", 10, ac1},  {"AC2", 5, ac2},   {"AC3", 60, ac3},  {"AC4", 300, ac4},
                                   {"AC5", 1, ac5},   {"AC6", 30, ac6},  {"AC7", 1, ac7},   {"AC8", 60, ac8},
                                   {"AC9", 1, ac9},   {"AC10", 300, ac10}, {"AC11", 600, ac11}};
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%-4s %s  %s; %.2f s (limit %.0f s)%s\n", c.id, pass ? "PASS" : "FAIL", o.detail.c_str(), secs, c.limit_s,
                in_time ? "" : " TIME EXCEEDED");
    std::fflush(stdout);
  }
  fs::remove_all(workdir());
  return failures == 0 ? 0 : 1;
}
