#include "radx/xplain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "radx/common.hpp"

namespace radx {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

struct Standardized {
  Eigen::MatrixXd z;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
};

Standardized standardize(const Eigen::MatrixXd& x) {
  const auto n = static_cast<double>(x.rows());
  Standardized s;
  s.means = x.colwise().mean().transpose();
  s.sds.resize(x.cols());
  s.z.resize(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd c = x.col(j).array() - s.means(j);
    const double sd = std::sqrt(c.squaredNorm() / n);
    // Constant columns (up to rounding in the mean) are left out of the fit.
    const bool constant = x.col(j).maxCoeff() == x.col(j).minCoeff() || !(sd > 0.0);
    s.sds(j) = constant ? 0.0 : sd;
    s.z.col(j) = constant ? Eigen::VectorXd::Zero(x.rows()) : Eigen::VectorXd(c / sd);
  }
  return s;
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(rows[k]));
  return out;
}

std::vector<double> log_grid(double top, std::size_t points) {
  std::vector<double> grid(points);
  for (std::size_t k = 0; k < points; ++k) {
    grid[k] = top * std::pow(1e-4, static_cast<double>(k) / static_cast<double>(points - 1));
  }
  return grid;
}

}  // namespace

Eigen::VectorXd LassoModel::raw_coefficients() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(coefficients.size());
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    if (sds(j) > 0.0) out(j) = coefficients(j) / sds(j);
  }
  return out;
}

double LassoModel::raw_intercept() const { return intercept - raw_coefficients().dot(means); }

Eigen::VectorXd LassoModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != coefficients.size()) throw InputError("lasso predict: column count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), intercept);
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    if (sds(j) > 0.0 && coefficients(j) != 0.0) {
      out += coefficients(j) * ((x.col(j).array() - means(j)) / sds(j)).matrix();
    }
  }
  return out;
}

double lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Standardized s = standardize(x);
  const Eigen::VectorXd yc = y.array() - y.mean();
  // same dot products as the coordinate update, so the null threshold is exact
  double top = 0.0;
  for (Eigen::Index j = 0; j < s.z.cols(); ++j) top = std::max(top, std::abs(s.z.col(j).dot(yc) / static_cast<double>(x.rows())));
  return top;
}

double lasso_objective(const LassoModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return 0.5 * mse(y, model.predict(x)) + model.penalty * model.coefficients.lpNorm<1>();
}

LassoModel lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty,
                     std::vector<std::string> names, const LassoOptions& options, const Eigen::VectorXd& warm) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 2) throw InputError("lasso_fit: at least 2 rows are required");
  if (y.size() != n) throw InputError("lasso_fit: y length does not match X");
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) throw InputError("lasso_fit: penalty must be >= 0");
  if (names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != p) throw InputError("lasso_fit: names do not match X");

  const Standardized s = standardize(x);
  LassoModel m;
  m.names = std::move(names);
  m.penalty = penalty;
  m.means = s.means;
  m.sds = s.sds;
  m.intercept = y.mean();
  m.coefficients = Eigen::VectorXd::Zero(p);
  if (warm.size() == p) {
    for (Eigen::Index j = 0; j < p; ++j) m.coefficients(j) = s.sds(j) > 0.0 ? warm(j) : 0.0;
  }
  const double dn = static_cast<double>(n);
  Eigen::VectorXd r = (y.array() - m.intercept).matrix() - s.z * m.coefficients;

  auto objective = [&] { return 0.5 * r.squaredNorm() / dn + penalty * m.coefficients.lpNorm<1>(); };
  auto update = [&](Eigen::Index j) {
    const double old = m.coefficients(j);
    const double next = soft_threshold(old + s.z.col(j).dot(r) / dn, penalty);
    const double change = next - old;
    if (change != 0.0) {
      r -= change * s.z.col(j);
      m.coefficients(j) = next;
    }
    return std::abs(change);
  };

  // With strongly correlated predictors the sweeps contract slowly. Every
  // few sweeps, run feature-sign search steps: solve the problem exactly for
  // the current support and signs, then move toward that solution as far as
  // the true objective keeps decreasing (checking every zero crossing).
  // Each step lowers the objective, so sweep-to-sweep monotonicity holds.
  const Eigen::VectorXd yc = y.array() - m.intercept;
  auto objective_at = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd res = yc - s.z * beta;
    return 0.5 * res.squaredNorm() / dn + penalty * beta.lpNorm<1>();
  };
  auto feature_sign = [&] {
    for (int step = 0; step < 4 * p + 10; ++step) {
      const Eigen::VectorXd grad = s.z.transpose() * r / dn;
      std::vector<Eigen::Index> act;
      Eigen::Index worst = -1;
      double worst_excess = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (s.sds(j) == 0.0) continue;
        if (m.coefficients(j) != 0.0) {
          act.push_back(j);
        } else if (std::abs(grad(j)) - penalty > worst_excess) {
          worst_excess = std::abs(grad(j)) - penalty;
          worst = j;
        }
      }
      const auto k = static_cast<Eigen::Index>(act.size()) + (worst >= 0 ? 1 : 0);
      if (k == 0) return;
      Eigen::MatrixXd za(n, k);
      Eigen::VectorXd sign(k), start(k);
      for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(act.size()); ++a) {
        za.col(a) = s.z.col(act[static_cast<std::size_t>(a)]);
        start(a) = m.coefficients(act[static_cast<std::size_t>(a)]);
        sign(a) = start(a) > 0.0 ? 1.0 : -1.0;
      }
      if (worst >= 0) {
        act.push_back(worst);
        za.col(k - 1) = s.z.col(worst);
        start(k - 1) = 0.0;
        sign(k - 1) = grad(worst) > 0.0 ? 1.0 : -1.0;
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(za.transpose() * za / dn);
      if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) return;
      const Eigen::VectorXd target = ldlt.solve(za.transpose() * yc / dn - penalty * sign);
      // Candidate points: the target and every sign change on the way.
      std::vector<double> ts{1.0};
      for (Eigen::Index a = 0; a < k; ++a) {
        if (start(a) != 0.0 && target(a) * start(a) < 0.0) ts.push_back(start(a) / (start(a) - target(a)));
      }
      auto full = [&](const Eigen::VectorXd& sub) {
        Eigen::VectorXd beta = m.coefficients;
        for (Eigen::Index a = 0; a < k; ++a) beta(act[static_cast<std::size_t>(a)]) = sub(a);
        return beta;
      };
      double best_obj = objective_at(m.coefficients);
      const double current = best_obj;
      Eigen::VectorXd best;
      for (double t : ts) {
        Eigen::VectorXd sub = start + t * (target - start);
        for (Eigen::Index a = 0; a < k; ++a) {
          if (t < 1.0 && start(a) != 0.0 && std::abs(sub(a)) <= 1e-15 * std::abs(start(a))) sub(a) = 0.0;
          if (t < 1.0 && std::abs(t - start(a) / (start(a) - target(a))) == 0.0) sub(a) = 0.0;
        }
        const Eigen::VectorXd beta = full(sub);
        const double obj = objective_at(beta);
        if (obj < best_obj) {
          best_obj = obj;
          best = beta;
        }
      }
      if (best.size() == 0) return;
      m.coefficients = best;
      r = yc - s.z * m.coefficients;
      if (!(best_obj < current)) return;
    }
  };

  // Full sweeps alternate with sweeps over the active set until a full
  // sweep moves nothing by more than the tolerance.
  bool active_phase = false;
  while (true) {
    if (m.sweeps > 0 && m.sweeps % 10 == 0) feature_sign();
    if (m.sweeps >= options.max_sweeps) {
      throw ConvergenceError("lasso_fit: no convergence after " + std::to_string(options.max_sweeps) + " sweeps");
    }
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (s.sds(j) == 0.0) continue;
      if (active_phase && m.coefficients(j) == 0.0) continue;
      max_change = std::max(max_change, update(j));
    }
    ++m.sweeps;
    if (options.record_objective) m.objective.push_back(objective());
    if (max_change < options.tolerance) {
      if (!active_phase) break;
      active_phase = false;
    } else {
      active_phase = true;
    }
  }
  return m;
}

void SplitConfig::validate() const {
  if (n_test < 1) throw InputError("split: n_test must be >= 1");
  if (folds < 2) throw InputError("split: folds must be >= 2");
  if (repetitions < 1) throw InputError("split: repetitions must be >= 1");
}

CvResult cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                   const SplitConfig& split, std::uint64_t stream_seed, std::size_t grid_points) {
  if (split.folds < 2 || split.repetitions < 1) throw InputError("cv_lambda: need >= 2 folds and >= 1 repetition");
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < split.folds) throw InputError("cv_lambda: fewer rows than folds");
  if (grid_points < 2) throw InputError("cv_lambda: grid needs at least 2 points");
  if (y.maxCoeff() == y.minCoeff()) throw DegenerateError("cv_lambda: dependent variable has zero variance");
  const double top = lambda_max(x, y);
  if (!(top > 0.0)) throw DegenerateError("cv_lambda: no predictor varies with the dependent variable");

  CvResult out;
  out.grid = log_grid(top, grid_points);
  out.mean_mse.assign(grid_points, 0.0);
  std::vector<std::vector<LassoModel>> paths;

  for (std::size_t rep = 0; rep < split.repetitions; ++rep) {
    Rng rng(derive_seed(stream_seed, "cv.repetition", rep));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t f = 0; f < split.folds; ++f) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < n; ++i) (i % split.folds == f ? test : train).push_back(perm[i]);
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());
      const Eigen::MatrixXd xtr = rows_of(x, train);
      const Eigen::VectorXd ytr = rows_of(y, train);
      const Eigen::MatrixXd xte = rows_of(x, test);
      const Eigen::VectorXd yte = rows_of(y, test);
      std::vector<LassoModel> path;
      Eigen::VectorXd warm;
      for (std::size_t g = 0; g < grid_points; ++g) {
        path.push_back(lasso_fit(xtr, ytr, out.grid[g], names, {}, warm));
        warm = path.back().coefficients;
        out.mean_mse[g] += mse(yte, path.back().predict(xte));
      }
      out.held_out.push_back(std::move(test));
      paths.push_back(std::move(path));
    }
  }
  const auto fits = static_cast<double>(paths.size());
  for (double& v : out.mean_mse) v /= fits;
  for (std::size_t g = 1; g < grid_points; ++g) {
    if (out.mean_mse[g] < out.mean_mse[out.best]) out.best = g;
  }
  out.penalty = out.grid[out.best];
  out.cv_mse = out.mean_mse[out.best];
  for (auto& path : paths) out.fold_models.push_back(std::move(path[out.best]));
  return out;
}

Selection select_strong(const std::vector<std::string>& names, const Eigen::VectorXd& coefs, double cutoff) {
  if (names.size() < 2) throw InputError("select_strong: at least 2 candidates are required");
  if (static_cast<Eigen::Index>(names.size()) != coefs.size()) throw InputError("select_strong: names and coefficients differ in length");
  Selection out;
  const double total = coefs.lpNorm<1>();
  if (total == 0.0) {
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    out.names = {sorted[0], sorted[1]};
    out.degenerate = true;
    return out;
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(coefs(static_cast<Eigen::Index>(a)));
    const double mb = std::abs(coefs(static_cast<Eigen::Index>(b)));
    if (ma != mb) return ma > mb;
    return names[a] < names[b];
  });
  for (std::size_t k : order) {
    if (std::abs(coefs(static_cast<Eigen::Index>(k))) >= cutoff * total) out.names.push_back(names[k]);
  }
  if (out.names.size() < 2) out.names = {names[order[0]], names[order[1]]};
  return out;
}

std::vector<std::size_t> test_rows(std::size_t n, const SplitConfig& split) {
  split.validate();
  if (n < split.n_test + split.folds) throw InputError("too few rows for the requested test set and folds");
  Rng rng(derive_seed(split.seed, "xplain", 0));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::size_t> out(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(split.n_test));
  std::sort(out.begin(), out.end());
  return out;
}

ExplanationReport xplain_feature(const FeatureTable& table, const std::string& dependent,
                                 const XplainOptions& options) {
  const std::vector<std::string> dependents = table.continuous_names();
  const auto pos = std::find(dependents.begin(), dependents.end(), dependent);
  if (pos == dependents.end()) throw InputError("xplain: '" + dependent + "' is not a continuous column");
  const auto feature_index = static_cast<std::uint64_t>(pos - dependents.begin());
  if (options.min_predictors < 2 || options.max_predictors < options.min_predictors) {
    throw InputError("xplain: invalid predictor window");
  }

  std::vector<std::string> predictors;
  for (const auto& c : table.columns()) {
    if (c.name == dependent) continue;
    if (c.kind == FeatureKind::categorical && !options.include_categorical) continue;
    predictors.push_back(c.name);
  }
  if (predictors.size() < options.min_predictors) throw InputError("xplain: too few candidate predictors");

  const std::vector<std::size_t> test = test_rows(table.rows(), options.split);
  std::vector<std::size_t> train;
  for (std::size_t i = 0, t = 0; i < table.rows(); ++i) {
    if (t < test.size() && test[t] == i) {
      ++t;
    } else {
      train.push_back(i);
    }
  }
  const FeatureTable cv_table = table.select_rows(train);
  const FeatureTable test_table = table.select_rows(test);
  const Eigen::VectorXd y = cv_table.column(dependent);
  if (y.maxCoeff() == y.minCoeff()) throw DegenerateError("xplain: '" + dependent + "' has zero variance");
  const Eigen::MatrixXd x = cv_table.select_columns(predictors).values();
  const std::uint64_t stream = derive_seed(options.split.seed, "xplain", feature_index + 1);

  const CvResult cv = cv_lambda(x, y, predictors, options.split, stream);

  ExplanationReport rep;
  rep.dependent = dependent;
  rep.cv_mse = cv.cv_mse;
  rep.lambda_max = cv.grid.front();
  rep.lambda_min = cv.grid.back();
  rep.grid_points = cv.grid.size();

  std::map<std::string, std::size_t> count;
  std::map<std::string, double> mean_abs;
  for (const auto& model : cv.fold_models) {
    const Selection sel = select_strong(predictors, model.coefficients, options.cutoff);
    rep.degenerate_selection = rep.degenerate_selection || sel.degenerate;
    for (const auto& name : sel.names) ++count[name];
    rep.fold_selections.push_back(sel.names);
    for (std::size_t j = 0; j < predictors.size(); ++j) {
      mean_abs[predictors[j]] += std::abs(model.coefficients(static_cast<Eigen::Index>(j)));
    }
  }
  const auto fits = static_cast<double>(cv.fold_models.size());
  for (auto& [name, v] : mean_abs) v /= fits;
  for (const auto& [name, c] : count) rep.selection_frequency[name] = static_cast<double>(c) / fits;

  std::vector<std::string> ranked;
  for (const auto& [name, c] : count) ranked.push_back(name);
  std::sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
    if (count[a] != count[b]) return count[a] > count[b];
    if (mean_abs[a] != mean_abs[b]) return mean_abs[a] > mean_abs[b];
    return a < b;
  });
  std::size_t keep = 0;
  for (const auto& name : ranked) {
    if (static_cast<double>(count[name]) >= options.min_frequency * fits - 1e-9) ++keep;
  }
  keep = std::clamp(keep, options.min_predictors, options.max_predictors);
  keep = std::min(keep, ranked.size());
  std::vector<std::string> retained(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep));

  const Eigen::MatrixXd xr = cv_table.select_columns(retained).values();
  const CvResult refit_cv = cv_lambda(xr, y, retained, options.split, derive_seed(stream, "refit"));
  const LassoModel final_model = lasso_fit(xr, y, refit_cv.penalty, retained);
  rep.penalty = final_model.penalty;
  rep.final_cv_mse = refit_cv.cv_mse;
  rep.intercept = final_model.raw_intercept();
  const Eigen::VectorXd raw = final_model.raw_coefficients();
  for (std::size_t k = 0; k < retained.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    rep.selected.push_back({retained[k], raw(kk), final_model.coefficients(kk), rep.selection_frequency[retained[k]]});
  }

  const Eigen::VectorXd yt = test_table.column(dependent);
  const Eigen::VectorXd pred = final_model.predict(test_table.select_columns(retained).values());
  rep.test_mse = mse(yt, pred);
  const double sst = (yt.array() - yt.mean()).matrix().squaredNorm();
  rep.test_r2 = sst > 0.0 ? 1.0 - (yt - pred).squaredNorm() / sst : 0.0;
  rep.test_ids = test_table.ids();
  rep.observed.assign(yt.data(), yt.data() + yt.size());
  rep.predicted.assign(pred.data(), pred.data() + pred.size());
  return rep;
}

std::vector<XplainOutcome> xplain_all(const FeatureTable& table, const XplainOptions& options) {
  std::vector<XplainOutcome> out;
  for (const auto& name : table.continuous_names()) {
    XplainOutcome o;
    o.dependent = name;
    try {
      o.report = xplain_feature(table, name, options);
      o.ok = true;
    } catch (const Error& e) {
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace radx
