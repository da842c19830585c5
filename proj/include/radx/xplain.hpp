#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radx/table.hpp"

namespace radx {

struct LassoOptions {
  double tolerance = 1e-9;     ///< max coefficient change per sweep
  int max_sweeps = 100000;
  bool record_objective = false;
};

/// Lasso fit on internally standardized predictors (population sd) with a
/// centered response. Coefficients are on the standardized scale.
struct LassoModel {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;  ///< standardized scale; 0 for constant predictors
  double intercept = 0.0;        ///< mean of y, i.e. the intercept on the standardized scale
  double penalty = 0.0;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;           ///< population sd; 0 marks a constant predictor
  int sweeps = 0;
  std::vector<double> objective;  ///< per sweep, when recorded

  /// Slopes on the original predictor scale.
  Eigen::VectorXd raw_coefficients() const;
  double raw_intercept() const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Smallest penalty giving the all-zero solution: max_j |<z_j, y - ybar>| / N.
double lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Minimizes (1/2N)||y - b0 - Z b||^2 + penalty ||b||_1 by cyclic coordinate
/// descent. `warm` (standardized scale) seeds the iteration when nonempty.
LassoModel lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty,
                     std::vector<std::string> names = {}, const LassoOptions& options = {},
                     const Eigen::VectorXd& warm = {});

/// (1/2N)||y - b0 - Z b||^2 + penalty ||b||_1 for a fitted model on its own data.
double lasso_objective(const LassoModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct SplitConfig {
  std::size_t n_test = 30;
  std::size_t folds = 5;
  std::size_t repetitions = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CvResult {
  std::vector<double> grid;           ///< descending penalties
  std::vector<double> mean_mse;       ///< per grid point, over all held-out folds
  std::size_t best = 0;
  double penalty = 0.0;
  double cv_mse = 0.0;
  std::vector<std::vector<std::size_t>> held_out;  ///< rows held out, per fold fit
  std::vector<LassoModel> fold_models;             ///< fitted on each training fold at `penalty`
};

/// Repeated k-fold CV over a 100-point log grid from lambda_max down to
/// 1e-4 lambda_max. Ties in mean MSE go to the larger penalty.
CvResult cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                   const SplitConfig& split, std::uint64_t stream_seed, std::size_t grid_points = 100);

struct Selection {
  std::vector<std::string> names;  ///< by decreasing |coef|, then name
  bool degenerate = false;         ///< every coefficient was exactly 0
};

/// Predictors with |b_j| >= cutoff * sum_k |b_k|, topped up to the two
/// largest |b_j| when fewer qualify.
Selection select_strong(const std::vector<std::string>& names, const Eigen::VectorXd& coefs,
                        double cutoff = 0.2);

struct XplainOptions {
  SplitConfig split;
  bool include_categorical = true;
  double cutoff = 0.2;
  double min_frequency = 0.5;
  std::size_t min_predictors = 2;
  std::size_t max_predictors = 3;
};

struct SelectedPredictor {
  std::string name;
  double coef = 0.0;               ///< original scale
  double standardized_coef = 0.0;
  double frequency = 0.0;
};

struct ExplanationReport {
  std::string dependent;
  std::vector<SelectedPredictor> selected;
  double intercept = 0.0;          ///< original scale
  double penalty = 0.0;            ///< final-model penalty
  double cv_mse = 0.0;             ///< all-predictor CV at its chosen penalty
  double final_cv_mse = 0.0;       ///< CV of the reduced model
  double test_mse = 0.0;
  double test_r2 = 0.0;
  std::map<std::string, double> selection_frequency;  ///< candidates selected at least once
  std::vector<std::vector<std::string>> fold_selections;
  bool degenerate_selection = false;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  std::size_t grid_points = 0;
  std::vector<std::string> test_ids;
  std::vector<double> observed;
  std::vector<double> predicted;
};

/// Rows held out as the test set; the same for every dependent feature.
std::vector<std::size_t> test_rows(std::size_t n, const SplitConfig& split);

/// The full protocol for one dependent feature.
ExplanationReport xplain_feature(const FeatureTable& table, const std::string& dependent,
                                 const XplainOptions& options);

struct XplainOutcome {
  std::string dependent;
  bool ok = false;
  ExplanationReport report;
  std::string error;
};

/// One outcome per continuous column; per-feature failures are recorded.
std::vector<XplainOutcome> xplain_all(const FeatureTable& table, const XplainOptions& options);

}  // namespace radx
