#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "radx/common.hpp"
#include "radx/stats.hpp"

namespace radx {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double mean_abs_offdiag(const Eigen::MatrixXd& m) {
  const Eigen::Index p = m.rows();
  const double total = m.cwiseAbs().sum() - m.diagonal().cwiseAbs().sum();
  return total / static_cast<double>(p * (p - 1));
}

// Maximum-likelihood precision with zeros forced outside `support`
// (covariance selection). Same column-wise scheme as the lasso, with the
// subproblem solved exactly on the free coordinates.
std::optional<Eigen::MatrixXd> constrained_precision(const Eigen::MatrixXd& s,
                                                    const std::vector<std::vector<bool>>& support) {
  const Eigen::Index p = s.rows();
  Eigen::MatrixXd w = s;
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(p - 1, p);
  const double scale = std::max(mean_abs_offdiag(s), std::numeric_limits<double>::min());
  bool converged = false;
  for (int it = 0; it < 1000 && !converged; ++it) {
    const Eigen::MatrixXd w_old = w;
    for (Eigen::Index j = 0; j < p; ++j) {
      std::vector<Eigen::Index> rest, free;
      for (Eigen::Index k = 0; k < p; ++k) {
        if (k == j) continue;
        if (support[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]) {
          free.push_back(static_cast<Eigen::Index>(rest.size()));
        }
        rest.push_back(k);
      }
      Eigen::VectorXd b = Eigen::VectorXd::Zero(p - 1);
      if (!free.empty()) {
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd a(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index u = 0; u < m; ++u) {
          rhs(u) = s(rest[static_cast<std::size_t>(free[static_cast<std::size_t>(u)])], j);
          for (Eigen::Index v = 0; v < m; ++v) {
            a(u, v) = w(rest[static_cast<std::size_t>(free[static_cast<std::size_t>(u)])],
                        rest[static_cast<std::size_t>(free[static_cast<std::size_t>(v)])]);
          }
        }
        const Eigen::VectorXd sol = a.ldlt().solve(rhs);
        for (Eigen::Index u = 0; u < m; ++u) b(free[static_cast<std::size_t>(u)]) = sol(u);
      }
      beta.col(j) = b;
      for (Eigen::Index a = 0; a < p - 1; ++a) {
        double v = 0.0;
        for (Eigen::Index c = 0; c < p - 1; ++c) v += w(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(c)]) * b(c);
        w(rest[static_cast<std::size_t>(a)], j) = v;
        w(j, rest[static_cast<std::size_t>(a)]) = v;
      }
    }
    converged = mean_abs_offdiag(w - w_old) < 1e-12 * scale;
  }
  if (!converged) return std::nullopt;
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double dot = 0.0;
    for (Eigen::Index k = 0, r = 0; k < p; ++k) {
      if (k == j) continue;
      dot += w(k, j) * beta(r++, j);
    }
    const double diag = 1.0 / (w(j, j) - dot);
    theta(j, j) = diag;
    for (Eigen::Index k = 0, r = 0; k < p; ++k) {
      if (k == j) continue;
      theta(k, j) = -beta(r++, j) * diag;
    }
  }
  Eigen::MatrixXd sym = 0.5 * (theta + theta.transpose());
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      if (i != j && !support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) sym(i, j) = 0.0;
  return sym;
}

}  // namespace

GlassoResult graphical_lasso(const Eigen::MatrixXd& s, double penalty, const GlassoOptions& options) {
  const Eigen::Index p = s.rows();
  if (p < 2 || s.cols() != p) throw InputError("graphical_lasso: S must be square with at least 2 rows");
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) throw InputError("graphical_lasso: penalty must be >= 0");

  GlassoResult out;
  Eigen::MatrixXd w = s;
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(p - 1, p);
  const double scale = std::max(mean_abs_offdiag(s), std::numeric_limits<double>::min());

  std::vector<Eigen::Index> rest(static_cast<std::size_t>(p - 1));
  Eigen::MatrixXd w11(p - 1, p - 1);
  Eigen::VectorXd s12(p - 1);

  for (out.iterations = 1; out.iterations <= options.max_iterations; ++out.iterations) {
    const Eigen::MatrixXd w_old = w;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index k = 0, r = 0; k < p; ++k) {
        if (k != j) rest[static_cast<std::size_t>(r++)] = k;
      }
      for (Eigen::Index a = 0; a < p - 1; ++a) {
        s12(a) = s(rest[static_cast<std::size_t>(a)], j);
        for (Eigen::Index b = 0; b < p - 1; ++b) {
          w11(a, b) = w(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(b)]);
        }
      }
      // Lasso subproblem: min 1/2 b'W11 b - b's12 + penalty |b|_1.
      Eigen::VectorXd b = beta.col(j);
      Eigen::VectorXd wb = w11 * b;
      bool inner_converged = false;
      for (int sweep = 0; sweep < options.max_inner_iterations; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index k = 0; k < p - 1; ++k) {
          const double partial = s12(k) - (wb(k) - w11(k, k) * b(k));
          const double updated = soft_threshold(partial, penalty) / w11(k, k);
          const double change = updated - b(k);
          if (change != 0.0) {
            wb += change * w11.col(k);
            b(k) = updated;
            max_change = std::max(max_change, std::abs(change));
          }
        }
        if (max_change < options.inner_tolerance) {
          inner_converged = true;
          break;
        }
      }
      if (!inner_converged) {
        out.converged = false;
        out.covariance = w;
        return out;
      }
      beta.col(j) = b;
      for (Eigen::Index a = 0; a < p - 1; ++a) {
        w(rest[static_cast<std::size_t>(a)], j) = wb(a);
        w(j, rest[static_cast<std::size_t>(a)]) = wb(a);
      }
    }
    const double change = mean_abs_offdiag(w - w_old);
    if (change < options.tolerance * scale) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(out.iterations, options.max_iterations);

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double dot = 0.0;
    for (Eigen::Index k = 0, r = 0; k < p; ++k) {
      if (k == j) continue;
      dot += w(k, j) * beta(r, j);
      ++r;
    }
    const double diag = 1.0 / (w(j, j) - dot);
    theta(j, j) = diag;
    for (Eigen::Index k = 0, r = 0; k < p; ++k) {
      if (k == j) continue;
      theta(k, j) = -beta(r, j) * diag;
      ++r;
    }
  }
  out.covariance = w;
  out.precision = 0.5 * (theta + theta.transpose());
  return out;
}

Eigen::MatrixXd partial_correlations(const Eigen::MatrixXd& precision) {
  const Eigen::Index p = precision.rows();
  Eigen::MatrixXd r(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      r(i, j) = i == j ? 1.0 : -precision(i, j) / std::sqrt(precision(i, i) * precision(j, j));
    }
  }
  return r;
}

std::vector<double> default_penalty_grid(const Eigen::MatrixXd& correlation, std::size_t points, double ratio) {
  if (points < 2 || !(ratio > 0.0 && ratio < 1.0)) throw InputError("invalid penalty grid request");
  double top = 0.0;
  for (Eigen::Index i = 0; i < correlation.rows(); ++i) {
    for (Eigen::Index j = 0; j < correlation.cols(); ++j) {
      if (i != j) top = std::max(top, std::abs(correlation(i, j)));
    }
  }
  if (!(top > 0.0)) throw DegenerateError("all off-diagonal correlations are zero");
  std::vector<double> grid(points);
  for (std::size_t k = 0; k < points; ++k) {
    grid[k] = top * std::pow(ratio, static_cast<double>(k) / static_cast<double>(points - 1));
  }
  return grid;
}

GgmGraph ggm_fit(const FeatureTable& table, const std::vector<double>& penalty_grid,
                 const GlassoOptions& options) {
  if (penalty_grid.empty()) throw InputError("ggm_fit: empty penalty grid");
  const CorrelationMatrix corr = pearson_matrix(table);
  const Eigen::Index p = corr.r.rows();
  if (p < 3) throw InputError("ggm_fit: at least 3 continuous columns are required");
  const auto n = static_cast<double>(table.rows());

  GgmGraph best;
  bool have = false;
  std::vector<GgmGridPoint> path;
  for (double penalty : penalty_grid) {
    if (!(penalty > 0.0)) throw InputError("ggm_fit: penalties must be positive");
    GgmGridPoint point;
    point.penalty = penalty;
    const GlassoResult fit = graphical_lasso(corr.r, penalty, options);
    if (!fit.converged) {
      point.bic = std::numeric_limits<double>::infinity();
      path.push_back(point);
      continue;
    }
    // The lasso picks the support; the likelihood in the criterion comes
    // from the unpenalized refit on that support, since the shrunken
    // estimate would otherwise reward extra edges.
    std::vector<std::vector<bool>> support(static_cast<std::size_t>(p), std::vector<bool>(static_cast<std::size_t>(p), false));
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = i + 1; j < p; ++j) {
        if (fit.precision(i, j) != 0.0) {
          support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
          support[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = true;
          ++point.edges;
        }
      }
    }
    const std::optional<Eigen::MatrixXd> refit = constrained_precision(corr.r, support);
    Eigen::LLT<Eigen::MatrixXd> chol;
    if (refit) chol.compute(*refit);
    point.converged = refit.has_value() && chol.info() == Eigen::Success;
    if (!point.converged) {
      point.bic = std::numeric_limits<double>::infinity();
      path.push_back(point);
      continue;
    }
    const double log_det = 2.0 * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double log_lik = 0.5 * n * (log_det - (corr.r * *refit).trace());
    point.bic = -2.0 * log_lik + std::log(n) * static_cast<double>(point.edges);
    path.push_back(point);
    if (!have || point.bic < best.bic) {
      have = true;
      best.precision = *refit;
      best.penalty = penalty;
      best.bic = point.bic;
    }
  }
  if (!have) throw ConvergenceError("ggm_fit: graphical lasso failed at every penalty");

  best.nodes = corr.names;
  best.path = std::move(path);
  best.partial_correlation = partial_correlations(best.precision);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) {
      if (best.precision(i, j) != 0.0) {
        best.edges.push_back({best.nodes[static_cast<std::size_t>(i)], best.nodes[static_cast<std::size_t>(j)],
                              best.partial_correlation(i, j)});
      }
    }
  }
  return best;
}

}  // namespace radx
