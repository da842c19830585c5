#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radx/table.hpp"

namespace radx {

struct CorrelationMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd r;
};

/// Pearson correlation between all continuous columns.
/// Throws DegenerateError naming the first zero-variance column.
CorrelationMatrix pearson_matrix(const FeatureTable& table);

/// Drops constant columns, returning the reduced table and one warning per
/// dropped column.
std::pair<FeatureTable, std::vector<std::string>> drop_constant_columns(const FeatureTable& table);

// --- Gaussian graphical model --------------------------------------------

struct GlassoOptions {
  double tolerance = 1e-6;       ///< mean |dW| relative to mean |S offdiag|
  int max_iterations = 500;      ///< outer sweeps over columns
  double inner_tolerance = 1e-10;
  int max_inner_iterations = 10000;
};

struct GlassoResult {
  Eigen::MatrixXd covariance;  ///< W, the regularized covariance estimate
  Eigen::MatrixXd precision;   ///< symmetrized inverse of W with the lasso zeros
  int iterations = 0;
  bool converged = false;
};

/// Block coordinate descent for the l1-penalized Gaussian likelihood
///   log det Omega - tr(S Omega) - penalty * sum_{i != j} |omega_ij|.
/// The diagonal is not penalized.
GlassoResult graphical_lasso(const Eigen::MatrixXd& s, double penalty, const GlassoOptions& options = {});

struct GgmEdge {
  std::string a;
  std::string b;
  double partial_correlation = 0.0;
};

struct GgmGridPoint {
  double penalty = 0.0;
  double bic = 0.0;
  std::size_t edges = 0;
  bool converged = false;
};

struct GgmGraph {
  std::vector<std::string> nodes;
  std::vector<GgmEdge> edges;       ///< a precedes b in node order
  Eigen::MatrixXd precision;
  Eigen::MatrixXd partial_correlation;
  double penalty = 0.0;
  double bic = 0.0;
  std::vector<GgmGridPoint> path;   ///< one entry per grid point, grid order
};

/// `points` log-spaced penalties from the largest absolute off-diagonal
/// correlation down to `ratio` times that value.
std::vector<double> default_penalty_grid(const Eigen::MatrixXd& correlation, std::size_t points = 30,
                                         double ratio = 0.02);

/// Sparse precision estimate over the continuous columns. Each grid penalty
/// yields a lasso support; the precision reported is the unpenalized
/// maximum-likelihood refit on the support with the lowest BIC (ties go to
/// the earlier grid point).
GgmGraph ggm_fit(const FeatureTable& table, const std::vector<double>& penalty_grid,
                 const GlassoOptions& options = {});

/// r_ij = -omega_ij / sqrt(omega_ii omega_jj), unit diagonal.
Eigen::MatrixXd partial_correlations(const Eigen::MatrixXd& precision);

// --- PCA ---------------------------------------------------------------------

struct PcaResult {
  std::vector<std::string> names;
  Eigen::VectorXd eigenvalues;        ///< descending, clamped at 0
  Eigen::MatrixXd loadings;           ///< columns are unit eigenvectors
  Eigen::VectorXd means;
  Eigen::VectorXd sds;                ///< sample (n - 1) standard deviations
  Eigen::VectorXd cumulative_variance;
  std::size_t rows = 0;
};

/// Correlation-matrix PCA of the continuous columns. Each eigenvector is
/// signed so that its largest-magnitude entry is positive.
PcaResult pca(const FeatureTable& table);

/// Smallest k whose cumulative variance fraction reaches `fraction`.
std::size_t components_for_variance(const PcaResult& p, double fraction = 0.95);

/// Standardized rows of `table` projected on the first k loadings (N x k).
Eigen::MatrixXd scores(const PcaResult& p, const FeatureTable& table, std::size_t k);

// --- k-means -----------------------------------------------------------------

struct KMeansOptions {
  std::size_t k = 12;
  std::uint64_t seed = 0;
  std::size_t restarts = 20;
  std::size_t max_iterations = 500;
  double tolerance = 1e-10;  ///< relative WCSS change
};

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::string> names;
  /// Cluster per row, relabelled so ids appear in order of first use.
  std::vector<std::size_t> cluster;
  Eigen::MatrixXd centroids;        ///< k x dims
  double wcss = 0.0;
  double seeding_wcss = 0.0;        ///< WCSS of the k-means++ seeds of the kept restart
  std::vector<double> wcss_trace;   ///< per Lloyd iteration of the kept restart
  std::size_t dims = 0;
};

/// k-means++ seeding then Lloyd iterations, best of `restarts` by WCSS.
ClusterAssignment kmeans(const Eigen::MatrixXd& points, std::vector<std::string> names,
                         const KMeansOptions& options);

double within_cluster_ss(const Eigen::MatrixXd& points, const std::vector<std::size_t>& cluster,
                         const Eigen::MatrixXd& centroids);

struct LoadingClusterOptions {
  KMeansOptions kmeans;
  double variance_fraction = 0.95;
  bool scale_by_sqrt_eigenvalue = true;
};

/// Feature coordinates in the first `dims` components, optionally scaled by
/// sqrt(eigenvalue) (biplot geometry). Rows follow p.names.
Eigen::MatrixXd loading_coordinates(const PcaResult& p, std::size_t dims, bool scale_by_sqrt_eigenvalue);

/// Clusters features by their loading coordinates in the components needed
/// to reach `variance_fraction`.
ClusterAssignment kmeans_loadings(const PcaResult& p, const LoadingClusterOptions& options);

}  // namespace radx
