#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radx/stats.hpp"
#include "radx/table.hpp"

namespace radx {

/// Follow-up per patient. event: 1 = death observed, 0 = censored.
struct SurvivalData {
  std::vector<std::string> ids;
  std::vector<double> time;
  std::vector<int> event;

  std::size_t size() const { return time.size(); }
  std::size_t events() const;
  void validate() const;
  SurvivalData subset(const std::vector<std::size_t>& rows) const;
};

/// Reads "patient_id,time,event".
SurvivalData read_survival(const std::filesystem::path& csv_path);
void write_survival(const SurvivalData& surv, const std::filesystem::path& csv_path);

/// Reorders `surv` to follow `ids`; every id must be present.
SurvivalData align(const SurvivalData& surv, const std::vector<std::string>& ids);

struct CoxOptions {
  double tolerance = 1e-9;   ///< change in log partial likelihood
  int max_iterations = 100;
  double divergence = 50.0;  ///< bound on |beta * sd(x)|
};

struct CoxModel {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  double concordance = 0.0;
  double log_likelihood = 0.0;
  double null_log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_likelihood_trace;  ///< after each accepted step, starting at beta = 0
  std::size_t tied_event_times = 0;           ///< distinct event times shared by 2+ events

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const { return x * coef; }
};

/// Breslow log partial likelihood at `beta`.
double cox_log_likelihood(const Eigen::MatrixXd& x, const SurvivalData& surv, const Eigen::VectorXd& beta);

/// Newton-Raphson with step halving on the Breslow partial likelihood.
CoxModel cox_fit(const Eigen::MatrixXd& x, std::vector<std::string> names, const SurvivalData& surv,
                 const CoxOptions& options = {});

/// Harrell's C; ties in risk count one half.
double concordance(const Eigen::VectorXd& risk, const SurvivalData& surv);

/// Product-limit curve. The first row is time 0 with survival 1; then one
/// row per distinct event time.
struct KmCurve {
  std::vector<double> time;
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  /// Step-function value at t (right-continuous).
  double at(double t) const;
};

KmCurve km_estimate(const SurvivalData& surv);

struct LogrankResult {
  double statistic = 0.0;
  double p = 1.0;
  double observed_a = 0.0;
  double expected_a = 0.0;
  double variance = 0.0;
};

LogrankResult logrank(const SurvivalData& a, const SurvivalData& b);

struct SplitPoint {
  double percentile = 0.0;
  double cutoff = 0.0;
  std::size_t high = 0;   ///< patients with risk > cutoff
  double statistic = 0.0;
  double p = 1.0;
};

struct SplitResult {
  double percentile = 0.0;
  double cutoff = 0.0;
  LogrankResult test;
  bool optimism_biased = true;  ///< p comes from a maximum over the grid
  std::vector<bool> high;       ///< per patient
  std::vector<SplitPoint> grid;
};

/// Log-rank-maximizing cutoff over risk percentiles 10, 15, ..., 90
/// (ties go to the lower cutoff). High-risk group: risk > cutoff.
SplitResult optimal_split(const Eigen::VectorXd& risk, const SurvivalData& surv);

struct RiskModel {
  CoxModel cox;
  SplitResult split;
  KmCurve low;
  KmCurve high;
  Eigen::VectorXd risk;
};

/// Cox on the given covariates, then risk stratification and KM curves.
RiskModel risk_model(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const SurvivalData& surv,
                     const CoxOptions& options = {});

/// Cox model on the first k principal-component scores of the continuous columns.
RiskModel pc_risk_model(const FeatureTable& table, const SurvivalData& surv, std::size_t k = 12,
                        const CoxOptions& options = {});

/// Cox model on clinical covariates (grade, age, SUVmax by default).
RiskModel baseline_model(const FeatureTable& table, const SurvivalData& surv,
                         const std::vector<std::string>& covariates = {"grade", "age", "suv_max"},
                         const CoxOptions& options = {});

}  // namespace radx
