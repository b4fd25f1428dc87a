#pragma once

// Pairwise Gaussian process: squared-exponential prior over latent utilities,
// probit comparison likelihood, and a Laplace approximation of the posterior.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prefopt/types.hpp"

namespace prefopt {

struct KernelConfig {
  /// One entry (shared across dimensions) or one entry per input dimension.
  Eigen::VectorXd lengthscales = Eigen::VectorXd::Constant(1, 0.3);
  double signal_variance = 1.0;

  static KernelConfig shared(double lengthscale, double signal_variance = 1.0);

  double lengthscale(std::size_t dim) const;
  /// Throws Input on non-positive entries or a lengthscale count that fits neither 1 nor `dimension`.
  void validate(std::size_t dimension) const;
  double jitter() const { return 1e-6 * signal_variance; }
  double operator()(const Point& a, const Point& b) const;

  friend bool operator==(const KernelConfig& a, const KernelConfig& b) {
    return a.signal_variance == b.signal_variance && a.lengthscales.size() == b.lengthscales.size() &&
           a.lengthscales == b.lengthscales;
  }
};

struct NoiseConfig {
  double sigma = 0.1;  // standard deviation of the additive comparison noise
};

/// Prior covariance over `points` with a 1e-6 * signal_variance diagonal jitter.
Eigen::MatrixXd kernel_matrix(std::span<const Point> points, const KernelConfig& kernel);

/// Cross-covariance k(rows[i], cols[j]) without jitter.
Eigen::MatrixXd cross_covariance(std::span<const Point> rows, std::span<const Point> cols,
                                 const KernelConfig& kernel);

/// P(pi = 0 | f): probability that the first option wins.
double probit_preference_probability(double f_a, double f_b, const NoiseConfig& noise);

/// Negative log posterior of latent utilities at the dataset's points, with
/// its analytic gradient and the likelihood curvature W.
class PairwiseObjective {
 public:
  PairwiseObjective(const ComparisonDataset& data, const Eigen::MatrixXd& prior_covariance,
                    const NoiseConfig& noise);

  double log_likelihood(const Eigen::VectorXd& f) const;
  Eigen::VectorXd log_likelihood_gradient(const Eigen::VectorXd& f) const;
  /// W = -d^2 log P(D|f) / df^2. Symmetric PSD.
  Eigen::MatrixXd hessian_w(const Eigen::VectorXd& f) const;

  /// -log P(D|f) + 0.5 f' Sigma^-1 f (normalising constants dropped).
  double value(const Eigen::VectorXd& f) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& f) const;

  const Eigen::LLT<Eigen::MatrixXd>& prior_factor() const { return prior_llt_; }

 private:
  std::vector<std::pair<std::size_t, std::size_t>> winner_loser_;
  Eigen::LLT<Eigen::MatrixXd> prior_llt_;
  double scale_;  // 1 / (sqrt(2) sigma)
};

struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Quantities needed to combine one query with others without refactorising.
struct QueryProjection {
  Point x;
  double mean = 0.0;
  double prior_variance = 0.0;
  Eigen::VectorXd whitened;   // L^-1 k(X, x)
  Eigen::VectorXd corrected;  // M^-1 L^-1 k(X, x) with M M' = I + L' W L
};

class LaplacePosterior {
 public:
  /// Posterior with no data: the zero-mean GP prior.
  static LaplacePosterior prior(std::size_t dimension, const KernelConfig& kernel);

  LaplacePosterior(std::vector<Point> points, KernelConfig kernel, Eigen::MatrixXd prior_covariance,
                   Eigen::MatrixXd prior_chol, Eigen::VectorXd whitened_utilities,
                   Eigen::VectorXd map_utilities, Eigen::MatrixXd hessian_w, double log_likelihood,
                   std::size_t iterations);

  std::size_t dimension() const { return dimension_; }
  const std::vector<Point>& points() const { return points_; }
  const KernelConfig& kernel() const { return kernel_; }
  const Eigen::VectorXd& map_utilities() const { return map_utilities_; }
  const Eigen::MatrixXd& prior_covariance() const { return prior_covariance_; }
  const Eigen::MatrixXd& hessian_w() const { return hessian_w_; }
  /// Sigma^-1 f_hat.
  const Eigen::VectorXd& alpha() const { return alpha_; }
  std::size_t newton_iterations() const { return iterations_; }

  /// (Sigma^-1 + W)^-1 assembled densely; used by tests and diagnostics.
  Eigen::MatrixXd posterior_covariance() const;

  /// Laplace approximation of log P(D | hyperparameters).
  double log_evidence() const { return log_evidence_; }

  QueryProjection project(const Point& x) const;
  /// Posterior covariance between two projected queries.
  double covariance(const QueryProjection& a, const QueryProjection& b) const;
  double variance(const QueryProjection& a) const;

  PredictiveDistribution predict(std::span<const Point> queries) const;
  double mean(const Point& x) const;

 private:
  LaplacePosterior() = default;

  std::size_t dimension_ = 0;
  std::vector<Point> points_;
  KernelConfig kernel_;
  Eigen::MatrixXd prior_covariance_;
  Eigen::MatrixXd prior_chol_;      // lower L with L L' = Sigma
  Eigen::MatrixXd correction_chol_; // lower M with M M' = I + L' W L
  Eigen::VectorXd map_utilities_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd hessian_w_;
  double log_evidence_ = 0.0;
  std::size_t iterations_ = 0;
};

struct NewtonOptions {
  double gradient_tolerance = 1e-6;
  std::size_t max_iterations = 100;
  std::size_t max_halvings = 20;
};

/// MAP latent utilities by damped Newton iterations, then the Gaussian
/// approximation at the mode. Requires at least one duel and sigma > 0.
LaplacePosterior fit_laplace(const ComparisonDataset& data, const KernelConfig& kernel,
                             const NoiseConfig& noise, const NewtonOptions& options = {});

PredictiveDistribution predict(const LaplacePosterior& posterior, std::span<const Point> queries,
                               const KernelConfig& kernel);

/// Fits each shared lengthscale in `grid` and keeps the highest Laplace evidence
/// (first wins ties). Signal variance is taken from `base`.
LaplacePosterior fit_with_lengthscale_search(const ComparisonDataset& data, const KernelConfig& base,
                                             const NoiseConfig& noise, std::span<const double> grid,
                                             const NewtonOptions& options = {});

inline constexpr double kDefaultLengthscaleGrid[] = {0.1, 0.2, 0.3, 0.5, 1.0};

}  // namespace prefopt
