#include "radx/survival.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "radx/common.hpp"
#include "radx/csv.hpp"

namespace radx {

std::size_t SurvivalData::events() const {
  return static_cast<std::size_t>(std::count(event.begin(), event.end(), 1));
}

void SurvivalData::validate() const {
  if (time.size() != event.size()) throw InputError("survival: time and event lengths differ");
  if (!ids.empty() && ids.size() != time.size()) throw InputError("survival: id and time lengths differ");
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!(time[i] > 0.0) || !std::isfinite(time[i])) throw InputError("survival: times must be positive and finite");
    if (event[i] != 0 && event[i] != 1) throw InputError("survival: event flags must be 0 or 1");
  }
}

SurvivalData SurvivalData::subset(const std::vector<std::size_t>& rows) const {
  SurvivalData out;
  for (std::size_t r : rows) {
    if (r >= time.size()) throw InputError("survival: row index out of range");
    if (!ids.empty()) out.ids.push_back(ids[r]);
    out.time.push_back(time[r]);
    out.event.push_back(event[r]);
  }
  return out;
}

SurvivalData read_survival(const std::filesystem::path& csv_path) {
  const auto rows = read_csv(csv_path);
  if (rows.empty()) throw InputError("survival file " + csv_path.string() + " is empty");
  const CsvRow expected{"patient_id", "time", "event"};
  if (rows[0] != expected) throw InputError("survival file header must be patient_id,time,event");
  SurvivalData out;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) throw InputError("survival file row " + std::to_string(r + 1) + " needs 3 cells");
    if (!seen.insert(rows[r][0]).second) throw InputError("duplicate patient_id " + rows[r][0] + " in survival file");
    out.ids.push_back(rows[r][0]);
    out.time.push_back(parse_double(rows[r][1], "time of " + rows[r][0]));
    const double e = parse_double(rows[r][2], "event of " + rows[r][0]);
    if (e != 0.0 && e != 1.0) throw InputError("event of " + rows[r][0] + " must be 0 or 1");
    out.event.push_back(static_cast<int>(e));
  }
  out.validate();
  return out;
}

void write_survival(const SurvivalData& surv, const std::filesystem::path& csv_path) {
  CsvWriter w(csv_path);
  w.row({"patient_id", "time", "event"});
  for (std::size_t i = 0; i < surv.size(); ++i) w.cell(surv.ids.at(i)).cell(surv.time[i]).cell(surv.event[i]).end_row();
}

SurvivalData align(const SurvivalData& surv, const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < surv.ids.size(); ++i) where[surv.ids[i]] = i;
  std::vector<std::size_t> rows;
  for (const auto& id : ids) {
    const auto it = where.find(id);
    if (it == where.end()) throw InputError("no survival record for patient " + id);
    rows.push_back(it->second);
  }
  return surv.subset(rows);
}

namespace {

// Indices grouped by equal time, latest time first, so that the risk set of
// a group is everything seen up to and including it.
std::vector<std::vector<std::size_t>> descending_time_groups(const SurvivalData& surv) {
  std::vector<std::size_t> order(surv.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return surv.time[a] > surv.time[b]; });
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == 0 || surv.time[order[k]] != surv.time[order[k - 1]]) groups.emplace_back();
    groups.back().push_back(order[k]);
  }
  return groups;
}

struct CoxState {
  double log_likelihood = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;
};

CoxState cox_state(const Eigen::MatrixXd& x, const SurvivalData& surv, const Eigen::VectorXd& beta,
                   const std::vector<std::vector<std::size_t>>& groups, bool derivatives) {
  const Eigen::Index k = x.cols();
  CoxState st;
  st.gradient = Eigen::VectorXd::Zero(k);
  st.information = Eigen::MatrixXd::Zero(k, k);
  const Eigen::VectorXd eta = x * beta;
  // Shift the exponent for stability; it cancels in every ratio.
  const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k, k);
  for (const auto& group : groups) {
    for (std::size_t i : group) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double w = std::exp(eta(ii) - shift);
      s0 += w;
      if (derivatives) {
        s1 += w * x.row(ii).transpose();
        s2 += w * x.row(ii).transpose() * x.row(ii);
      }
    }
    for (std::size_t i : group) {
      if (surv.event[i] != 1) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      st.log_likelihood += eta(ii) - shift - std::log(s0);
      if (derivatives) {
        const Eigen::VectorXd mean = s1 / s0;
        st.gradient += x.row(ii).transpose() - mean;
        st.information += s2 / s0 - mean * mean.transpose();
      }
    }
  }
  return st;
}

void check_cox_input(const Eigen::MatrixXd& x, const SurvivalData& surv) {
  surv.validate();
  if (static_cast<std::size_t>(x.rows()) != surv.size()) throw InputError("cox: covariate rows do not match survival data");
  if (surv.events() == 0) throw DegenerateError("cox: no events");
}

}  // namespace

double cox_log_likelihood(const Eigen::MatrixXd& x, const SurvivalData& surv, const Eigen::VectorXd& beta) {
  check_cox_input(x, surv);
  return cox_state(x, surv, beta, descending_time_groups(surv), false).log_likelihood;
}

CoxModel cox_fit(const Eigen::MatrixXd& x, std::vector<std::string> names, const SurvivalData& surv,
                 const CoxOptions& options) {
  check_cox_input(x, surv);
  const Eigen::Index k = x.cols();
  if (k < 1) throw InputError("cox: no covariates");
  if (names.empty()) {
    for (Eigen::Index j = 0; j < k; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != k) throw InputError("cox: names do not match covariates");
  if (static_cast<std::size_t>(k) >= surv.events()) {
    throw DegenerateError("cox: " + std::to_string(k) + " covariates need more than " +
                          std::to_string(surv.events()) + " events");
  }
  const Eigen::RowVectorXd means = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - means;
  Eigen::VectorXd sds(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (x.col(j).maxCoeff() == x.col(j).minCoeff()) throw DegenerateError("cox: covariate " + names[static_cast<std::size_t>(j)] + " is constant");
    sds(j) = std::sqrt(xc.col(j).squaredNorm() / static_cast<double>(x.rows() - 1));
  }

  const auto groups = descending_time_groups(surv);
  CoxModel m;
  m.names = std::move(names);
  for (const auto& g : groups) {
    std::size_t d = 0;
    for (std::size_t i : g) d += static_cast<std::size_t>(surv.event[i]);
    if (d > 1) ++m.tied_event_times;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  CoxState st = cox_state(xc, surv, beta, groups, true);
  m.null_log_likelihood = st.log_likelihood;
  m.log_likelihood_trace.push_back(st.log_likelihood);
  for (m.iterations = 1; m.iterations <= options.max_iterations; ++m.iterations) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(st.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
      throw DegenerateError("cox: singular information matrix");
    }
    Eigen::VectorXd step = ldlt.solve(st.gradient);
    CoxState next;
    Eigen::VectorXd candidate;
    int halvings = 0;
    while (true) {
      candidate = beta + step;
      next = cox_state(xc, surv, candidate, groups, true);
      if (next.log_likelihood >= st.log_likelihood) break;
      if (++halvings > 40) break;
      step *= 0.5;
    }
    if (next.log_likelihood < st.log_likelihood) {
      // No ascent possible from here: the current point is the optimum to
      // working precision.
      m.converged = true;
      break;
    }
    const double gain = next.log_likelihood - st.log_likelihood;
    beta = candidate;
    st = std::move(next);
    m.log_likelihood_trace.push_back(st.log_likelihood);
    if ((beta.array() * sds.array()).matrix().norm() > options.divergence) {
      throw ConvergenceError("cox: coefficients diverge (monotone likelihood)");
    }
    // Under monotone likelihood the gain vanishes while the steps stay
    // large, so a small gain alone is not convergence.
    if (gain < options.tolerance && (step.array() * sds.array()).matrix().norm() < 1e-2) {
      m.converged = true;
      break;
    }
  }
  if (!m.converged) throw ConvergenceError("cox: no convergence after " + std::to_string(options.max_iterations) + " iterations");
  m.iterations = std::min(m.iterations, options.max_iterations);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(st.information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw DegenerateError("cox: singular information matrix");
  const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  m.coef = beta;
  m.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  m.z = m.coef.cwiseQuotient(m.se);
  m.p.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) m.p(j) = std::min(1.0, 2.0 * normal_upper_tail(std::abs(m.z(j))));
  m.log_likelihood = st.log_likelihood;
  m.concordance = concordance(x * beta, surv);
  return m;
}

double concordance(const Eigen::VectorXd& risk, const SurvivalData& surv) {
  surv.validate();
  const std::size_t n = surv.size();
  if (static_cast<std::size_t>(risk.size()) != n) throw InputError("concordance: risk length does not match survival data");
  double score = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (surv.event[i] != 1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool comparable = surv.time[i] < surv.time[j] || (surv.time[i] == surv.time[j] && surv.event[j] == 0);
      if (!comparable) continue;
      pairs += 1.0;
      const double ri = risk(static_cast<Eigen::Index>(i));
      const double rj = risk(static_cast<Eigen::Index>(j));
      if (ri > rj) {
        score += 1.0;
      } else if (ri == rj) {
        score += 0.5;
      }
    }
  }
  if (pairs == 0.0) throw DegenerateError("concordance: no comparable pair");
  return score / pairs;
}

double KmCurve::at(double t) const {
  double s = 1.0;
  for (std::size_t k = 0; k < time.size() && time[k] <= t; ++k) s = survival[k];
  return s;
}

KmCurve km_estimate(const SurvivalData& surv) {
  surv.validate();
  KmCurve c;
  c.time.push_back(0.0);
  c.survival.push_back(1.0);
  c.at_risk.push_back(surv.size());
  c.events.push_back(0);

  std::vector<std::size_t> order(surv.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return surv.time[a] < surv.time[b]; });

  // Between censorings the product of (n - d)/n telescopes, so each
  // censoring-free stretch is evaluated as one ratio from its start.
  double base = 1.0;
  std::size_t segment_start = surv.size();
  std::size_t expected_at_risk = surv.size();
  double s = 1.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = surv.time[order[k]];
    const std::size_t at_risk = order.size() - k;
    std::size_t d = 0;
    std::size_t m = k;
    for (; m < order.size() && surv.time[order[m]] == t; ++m) d += static_cast<std::size_t>(surv.event[order[m]]);
    if (d > 0) {
      if (at_risk != expected_at_risk) {
        base = s;
        segment_start = at_risk;
      }
      s = base * (static_cast<double>(at_risk - d) / static_cast<double>(segment_start));
      c.time.push_back(t);
      c.survival.push_back(s);
      c.at_risk.push_back(at_risk);
      c.events.push_back(d);
      expected_at_risk = at_risk - d;
      if (m - k != d) expected_at_risk = 0;  // censored at the same time: new stretch next
    }
    k = m;
  }
  return c;
}

LogrankResult logrank(const SurvivalData& a, const SurvivalData& b) {
  a.validate();
  b.validate();
  if (a.size() == 0 || b.size() == 0) throw InputError("logrank: both groups must be nonempty");
  if (a.events() + b.events() == 0) throw DegenerateError("logrank: no events");
  std::map<double, std::array<std::size_t, 2>> deaths;
  for (std::size_t i = 0; i < a.size(); ++i) if (a.event[i]) ++deaths[a.time[i]][0];
  for (std::size_t i = 0; i < b.size(); ++i) if (b.event[i]) ++deaths[b.time[i]][1];
  std::vector<double> ta = a.time, tb = b.time;
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());

  LogrankResult out;
  double diff_a = 0.0, diff_b = 0.0, observed_b = 0.0, expected_b = 0.0;
  for (const auto& [t, d] : deaths) {
    const auto na = static_cast<double>(ta.end() - std::lower_bound(ta.begin(), ta.end(), t));
    const auto nb = static_cast<double>(tb.end() - std::lower_bound(tb.begin(), tb.end(), t));
    const double n = na + nb;
    const double dt = static_cast<double>(d[0] + d[1]);
    out.observed_a += static_cast<double>(d[0]);
    observed_b += static_cast<double>(d[1]);
    out.expected_a += dt * na / n;
    expected_b += dt * nb / n;
    diff_a += static_cast<double>(d[0]) - dt * na / n;
    diff_b += static_cast<double>(d[1]) - dt * nb / n;
    if (n > 1.0) out.variance += dt * (na * nb) * (n - dt) / (n * n * (n - 1.0));
  }
  if (out.variance > 0.0) {
    // (O_A - E_A) = -(O_B - E_B); averaging the squares keeps the statistic
    // exactly symmetric in the group labels.
    out.statistic = 0.5 * (diff_a * diff_a + diff_b * diff_b) / out.variance;
    out.p = std::min(1.0, 2.0 * normal_upper_tail(std::sqrt(out.statistic)));
  }
  return out;
}

SplitResult optimal_split(const Eigen::VectorXd& risk, const SurvivalData& surv) {
  surv.validate();
  const std::size_t n = surv.size();
  if (static_cast<std::size_t>(risk.size()) != n) throw InputError("optimal_split: risk length does not match survival data");
  if (n < 20) throw InputError("optimal_split: at least 20 patients are required");
  if (risk.maxCoeff() == risk.minCoeff()) throw DegenerateError("optimal_split: all risk values are identical");
  std::vector<double> sorted(risk.data(), risk.data() + n);
  std::sort(sorted.begin(), sorted.end());

  SplitResult best;
  bool have = false;
  for (int pct = 10; pct <= 90; pct += 5) {
    SplitPoint point;
    point.percentile = pct;
    point.cutoff = quantile_sorted(sorted, static_cast<double>(pct) / 100.0);
    std::vector<std::size_t> lo, hi;
    for (std::size_t i = 0; i < n; ++i) (risk(static_cast<Eigen::Index>(i)) > point.cutoff ? hi : lo).push_back(i);
    point.high = hi.size();
    if (lo.empty() || hi.empty()) {
      best.grid.push_back(point);
      continue;
    }
    const LogrankResult test = logrank(surv.subset(lo), surv.subset(hi));
    point.statistic = test.statistic;
    point.p = test.p;
    best.grid.push_back(point);
    if (!have || test.statistic > best.test.statistic) {
      have = true;
      best.percentile = point.percentile;
      best.cutoff = point.cutoff;
      best.test = test;
    }
  }
  if (!have) throw DegenerateError("optimal_split: no percentile cutoff separates the patients");
  best.high.resize(n);
  for (std::size_t i = 0; i < n; ++i) best.high[i] = risk(static_cast<Eigen::Index>(i)) > best.cutoff;
  return best;
}

RiskModel risk_model(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const SurvivalData& surv,
                     const CoxOptions& options) {
  RiskModel out;
  out.cox = cox_fit(x, names, surv, options);
  out.risk = out.cox.linear_predictor(x);
  out.split = optimal_split(out.risk, surv);
  std::vector<std::size_t> lo, hi;
  for (std::size_t i = 0; i < surv.size(); ++i) (out.split.high[i] ? hi : lo).push_back(i);
  out.low = km_estimate(surv.subset(lo));
  out.high = km_estimate(surv.subset(hi));
  return out;
}

RiskModel pc_risk_model(const FeatureTable& table, const SurvivalData& surv, std::size_t k, const CoxOptions& options) {
  if (table.rows() != surv.size()) throw InputError("pc_risk_model: table and survival data are not row-aligned");
  const PcaResult p = pca(table);
  if (k < 1 || k > p.names.size()) throw InputError("pc_risk_model: k must be between 1 and the number of features");
  std::vector<std::string> names;
  for (std::size_t j = 0; j < k; ++j) names.push_back("PC" + std::to_string(j + 1));
  return risk_model(scores(p, table, k), names, surv, options);
}

RiskModel baseline_model(const FeatureTable& table, const SurvivalData& surv,
                         const std::vector<std::string>& covariates, const CoxOptions& options) {
  if (table.rows() != surv.size()) throw InputError("baseline_model: table and survival data are not row-aligned");
  for (const auto& c : covariates) {
    if (!table.has(c)) throw InputError("baseline_model: missing column " + c);
  }
  return risk_model(table.select_columns(covariates).values(), covariates, surv, options);
}

}  // namespace radx
