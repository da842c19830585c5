#include "radx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "radx/common.hpp"

namespace radx {

namespace {

struct Standardized {
  Eigen::MatrixXd z;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
};

Standardized standardize(const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  if (x.rows() < 2) throw InputError("at least 2 rows are required");
  Standardized out;
  out.means = x.colwise().mean().transpose();
  out.z = x.rowwise() - out.means.transpose();
  out.sds = (out.z.colwise().squaredNorm() / static_cast<double>(x.rows() - 1)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double scale = std::max(1.0, std::abs(out.means(j)));
    if (!(out.sds(j) > 1e-13 * scale)) {
      throw DegenerateError("zero-variance column " + names[static_cast<std::size_t>(j)]);
    }
    out.z.col(j) /= out.sds(j);
  }
  return out;
}

Eigen::MatrixXd correlation_of(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd r = (z.transpose() * z) / static_cast<double>(z.rows() - 1);
  r = 0.5 * (r + r.transpose()).eval();
  r = r.cwiseMax(-1.0).cwiseMin(1.0);
  r.diagonal().setOnes();
  return r;
}

}  // namespace

CorrelationMatrix pearson_matrix(const FeatureTable& table) {
  const auto names = table.continuous_names();
  const auto sub = table.select_columns(names);
  const auto st = standardize(sub.values(), names);
  return {names, correlation_of(st.z)};
}

std::pair<FeatureTable, std::vector<std::string>> drop_constant_columns(const FeatureTable& table) {
  const auto constant = table.constant_columns();
  std::vector<std::string> warnings;
  std::vector<std::string> keep;
  const std::set<std::string> drop(constant.begin(), constant.end());
  for (const auto& name : table.names()) {
    if (drop.count(name)) {
      warnings.push_back("dropped constant column " + name);
    } else {
      keep.push_back(name);
    }
  }
  return {table.select_columns(keep), std::move(warnings)};
}

// --- PCA -------------------------------------------------------------------

PcaResult pca(const FeatureTable& table) {
  PcaResult out;
  out.names = table.continuous_names();
  if (out.names.empty()) throw InputError("pca: no continuous columns");
  const auto sub = table.select_columns(out.names);
  const auto st = standardize(sub.values(), out.names);
  out.means = st.means;
  out.sds = st.sds;
  out.rows = table.rows();
  const Eigen::MatrixXd r = correlation_of(st.z);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
  if (eig.info() != Eigen::Success) throw ConvergenceError("pca: eigendecomposition failed");
  const Eigen::Index p = r.rows();
  out.eigenvalues.resize(p);
  out.loadings.resize(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    // Eigen sorts ascending; reverse for descending order.
    const Eigen::Index src = p - 1 - k;
    out.eigenvalues(k) = std::max(0.0, eig.eigenvalues()(src));
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    const double largest = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (std::abs(v(i)) >= largest - 1e-12) {
        if (v(i) < 0) v = -v;
        break;
      }
    }
    out.loadings.col(k) = v;
  }
  out.cumulative_variance.resize(p);
  const double total = out.eigenvalues.sum();
  double running = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    running += out.eigenvalues(k);
    out.cumulative_variance(k) = running / total;
  }
  return out;
}

std::size_t components_for_variance(const PcaResult& p, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("variance fraction must lie in (0, 1]");
  for (Eigen::Index k = 0; k < p.cumulative_variance.size(); ++k) {
    if (p.cumulative_variance(k) >= fraction - 1e-10) return static_cast<std::size_t>(k + 1);
  }
  return static_cast<std::size_t>(p.cumulative_variance.size());
}

Eigen::MatrixXd scores(const PcaResult& p, const FeatureTable& table, std::size_t k) {
  if (k == 0 || k > p.names.size()) throw InputError("scores: k out of range");
  Eigen::MatrixXd z(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(p.names.size()));
  for (std::size_t j = 0; j < p.names.size(); ++j) {
    const auto col = table.find(p.names[j]);
    if (!col) throw InputError("scores: table lacks fitted column " + p.names[j]);
    const auto jj = static_cast<Eigen::Index>(j);
    z.col(jj) = (table.values().col(static_cast<Eigen::Index>(*col)).array() - p.means(jj)) / p.sds(jj);
  }
  return z * p.loadings.leftCols(static_cast<Eigen::Index>(k));
}

// --- k-means -----------------------------------------------------------------

double within_cluster_ss(const Eigen::MatrixXd& points, const std::vector<std::size_t>& cluster,
                         const Eigen::MatrixXd& centroids) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    total += (points.row(i) - centroids.row(static_cast<Eigen::Index>(cluster[static_cast<std::size_t>(i)])))
                 .squaredNorm();
  }
  return total;
}

namespace {

struct LloydRun {
  std::vector<std::size_t> cluster;
  Eigen::MatrixXd centroids;
  double wcss = 0.0;
  double seeding_wcss = 0.0;
  std::vector<double> trace;
};

std::size_t nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Eigen::MatrixXd seeds(static_cast<Eigen::Index>(k), points.cols());
  seeds.row(0) = points.row(static_cast<Eigen::Index>(rng.below(n)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      d2[i] = std::min(d2[i], (points.row(ii) - seeds.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
      // Guard against rounding leaving the target just above zero.
      while (d2[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = rng.below(n);
    }
    seeds.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
  }
  return seeds;
}

LloydRun lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, const KMeansOptions& opt) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto k = static_cast<std::size_t>(centroids.rows());
  LloydRun run;
  run.cluster.assign(n, 0);
  auto assign = [&] {
    for (std::size_t i = 0; i < n; ++i) run.cluster[i] = nearest(centroids, points.row(static_cast<Eigen::Index>(i)));
  };
  assign();
  run.seeding_wcss = within_cluster_ss(points, run.cluster, centroids);
  double previous = run.seeding_wcss;
  run.trace.push_back(previous);
  for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
    // Update step.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(run.cluster[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[run.cluster[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (points.row(static_cast<Eigen::Index>(i)) -
                          centroids.row(static_cast<Eigen::Index>(run.cluster[i]))).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
      run.cluster[far] = c;
    }
    assign();
    const double current = within_cluster_ss(points, run.cluster, centroids);
    run.trace.push_back(current);
    const bool done = current == 0.0 || std::abs(previous - current) <= opt.tolerance * previous;
    previous = current;
    if (done) break;
  }
  // Final centroids consistent with the final assignment.
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sums.row(static_cast<Eigen::Index>(run.cluster[i])) += points.row(static_cast<Eigen::Index>(i));
    ++counts[run.cluster[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
  }
  run.centroids = centroids;
  run.wcss = within_cluster_ss(points, run.cluster, centroids);
  if (run.wcss < run.trace.back()) run.trace.push_back(run.wcss);
  return run;
}

std::size_t distinct_rows(const Eigen::MatrixXd& points) {
  std::set<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) r[static_cast<std::size_t>(j)] = points(i, j);
    rows.insert(std::move(r));
  }
  return rows.size();
}

}  // namespace

ClusterAssignment kmeans(const Eigen::MatrixXd& points, std::vector<std::string> names,
                         const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (names.size() != n) throw InputError("kmeans: one name per row is required");
  if (options.k < 2 || options.k > n) throw InputError("kmeans: k must lie in [2, number of rows]");
  if (options.k > distinct_rows(points)) {
    throw DegenerateError("kmeans: k exceeds the number of distinct rows");
  }
  if (options.restarts == 0) throw InputError("kmeans: at least one restart is required");

  Rng rng(options.seed);
  LloydRun best;
  bool have = false;
  for (std::size_t r = 0; r < options.restarts; ++r) {
    auto run = lloyd(points, plus_plus_seeds(points, options.k, rng), options);
    if (!have || run.wcss < best.wcss) {
      best = std::move(run);
      have = true;
    }
  }

  // Relabel clusters in order of first appearance.
  std::vector<std::size_t> relabel(options.k, options.k);
  std::size_t next = 0;
  for (std::size_t c : best.cluster) {
    if (relabel[c] == options.k) relabel[c] = next++;
  }
  for (auto& label : relabel) {
    if (label == options.k) label = next++;
  }
  ClusterAssignment out;
  out.k = options.k;
  out.names = std::move(names);
  out.dims = static_cast<std::size_t>(points.cols());
  out.centroids.resize(static_cast<Eigen::Index>(options.k), points.cols());
  for (std::size_t c = 0; c < options.k; ++c) {
    out.centroids.row(static_cast<Eigen::Index>(relabel[c])) = best.centroids.row(static_cast<Eigen::Index>(c));
  }
  for (std::size_t c : best.cluster) out.cluster.push_back(relabel[c]);
  out.wcss = best.wcss;
  out.seeding_wcss = best.seeding_wcss;
  out.wcss_trace = std::move(best.trace);
  return out;
}

Eigen::MatrixXd loading_coordinates(const PcaResult& p, std::size_t dims, bool scale_by_sqrt_eigenvalue) {
  const auto d = static_cast<Eigen::Index>(dims);
  if (d < 1 || d > p.loadings.cols()) throw InputError("loading_coordinates: dims out of range");
  Eigen::MatrixXd coords = p.loadings.leftCols(d);
  if (scale_by_sqrt_eigenvalue) {
    for (Eigen::Index k = 0; k < d; ++k) coords.col(k) *= std::sqrt(p.eigenvalues(k));
  }
  return coords;
}

ClusterAssignment kmeans_loadings(const PcaResult& p, const LoadingClusterOptions& options) {
  const std::size_t dims = components_for_variance(p, options.variance_fraction);
  return kmeans(loading_coordinates(p, dims, options.scale_by_sqrt_eigenvalue), p.names, options.kmeans);
}

}  // namespace radx
