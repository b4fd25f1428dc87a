#include "prefopt/pairwise_gp.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "prefopt/error.hpp"
#include "prefopt/normal.hpp"

namespace prefopt {

KernelConfig KernelConfig::shared(double lengthscale, double signal_variance) {
  KernelConfig k;
  k.lengthscales = Eigen::VectorXd::Constant(1, lengthscale);
  k.signal_variance = signal_variance;
  return k;
}

double KernelConfig::lengthscale(std::size_t dim) const {
  return lengthscales.size() == 1 ? lengthscales[0] : lengthscales[static_cast<Eigen::Index>(dim)];
}

void KernelConfig::validate(std::size_t dimension) const {
  if (lengthscales.size() != 1 && static_cast<std::size_t>(lengthscales.size()) != dimension) {
    fail(ErrorKind::Input, "kernel has " + std::to_string(lengthscales.size()) +
                               " lengthscales for a " + std::to_string(dimension) + "-dimensional input");
  }
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i])) fail(ErrorKind::Input, "lengthscales must be positive");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) fail(ErrorKind::Input, "signal variance must be positive");
}

double KernelConfig::operator()(const Point& a, const Point& b) const {
  double r2 = 0.0;
  for (Eigen::Index m = 0; m < a.size(); ++m) {
    const double d = (a[m] - b[m]) / lengthscale(static_cast<std::size_t>(m));
    r2 += d * d;
  }
  return signal_variance * std::exp(-0.5 * r2);
}

namespace {

void check_dimensions(std::span<const Point> points, std::size_t dimension) {
  for (const auto& p : points) {
    if (static_cast<std::size_t>(p.size()) != dimension) {
      fail(ErrorKind::Input, "point has dimension " + std::to_string(p.size()) + ", expected " +
                                 std::to_string(dimension));
    }
  }
}

std::size_t common_dimension(std::span<const Point> points) {
  return points.empty() ? 0 : static_cast<std::size_t>(points.front().size());
}

}  // namespace

Eigen::MatrixXd cross_covariance(std::span<const Point> rows, std::span<const Point> cols,
                                 const KernelConfig& kernel) {
  const std::size_t dim = !rows.empty() ? common_dimension(rows) : common_dimension(cols);
  check_dimensions(rows, dim);
  check_dimensions(cols, dim);
  if (dim > 0) kernel.validate(dim);
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = kernel(rows[i], cols[j]);
  }
  return out;
}

Eigen::MatrixXd kernel_matrix(std::span<const Point> points, const KernelConfig& kernel) {
  const std::size_t dim = common_dimension(points);
  check_dimensions(points, dim);
  if (dim > 0) kernel.validate(dim);
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = kernel.signal_variance + kernel.jitter();
    for (Eigen::Index j = 0; j < i; ++j) {
      out(i, j) = out(j, i) = kernel(points[i], points[j]);
    }
  }
  return out;
}

double probit_preference_probability(double f_a, double f_b, const NoiseConfig& noise) {
  if (!(noise.sigma > 0.0)) {
    fail(ErrorKind::Input, "probit likelihood needs a positive noise sigma");
  }
  return normal::cdf((f_a - f_b) / (normal::kSqrt2 * noise.sigma));
}

// ---------------------------------------------------------------------------

PairwiseObjective::PairwiseObjective(const ComparisonDataset& data, const Eigen::MatrixXd& prior_covariance,
                                     const NoiseConfig& noise)
    : prior_llt_(prior_covariance) {
  if (!(noise.sigma > 0.0)) fail(ErrorKind::Input, "probit likelihood needs a positive noise sigma");
  if (prior_llt_.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "prior covariance is not positive definite after jitter");
  }
  scale_ = 1.0 / (normal::kSqrt2 * noise.sigma);
  winner_loser_.reserve(data.size());
  for (const auto& d : data.duels()) winner_loser_.emplace_back(d.winner(), d.loser());
}

double PairwiseObjective::log_likelihood(const Eigen::VectorXd& f) const {
  double ll = 0.0;
  for (const auto& [w, l] : winner_loser_) ll += normal::log_cdf(scale_ * (f[w] - f[l]));
  return ll;
}

Eigen::VectorXd PairwiseObjective::log_likelihood_gradient(const Eigen::VectorXd& f) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(f.size());
  for (const auto& [w, l] : winner_loser_) {
    const double r = scale_ * normal::inverse_mills(scale_ * (f[w] - f[l]));
    g[w] += r;
    g[l] -= r;
  }
  return g;
}

Eigen::MatrixXd PairwiseObjective::hessian_w(const Eigen::VectorXd& f) const {
  Eigen::MatrixXd w_mat = Eigen::MatrixXd::Zero(f.size(), f.size());
  for (const auto& [w, l] : winner_loser_) {
    const double z = scale_ * (f[w] - f[l]);
    const double r = normal::inverse_mills(z);
    const double lambda = scale_ * scale_ * r * (z + r);
    w_mat(w, w) += lambda;
    w_mat(l, l) += lambda;
    w_mat(w, l) -= lambda;
    w_mat(l, w) -= lambda;
  }
  return w_mat;
}

double PairwiseObjective::value(const Eigen::VectorXd& f) const {
  const Eigen::VectorXd u = prior_llt_.matrixL().solve(f);
  return -log_likelihood(f) + 0.5 * u.squaredNorm();
}

Eigen::VectorXd PairwiseObjective::gradient(const Eigen::VectorXd& f) const {
  return prior_llt_.solve(f) - log_likelihood_gradient(f);
}

// ---------------------------------------------------------------------------

LaplacePosterior LaplacePosterior::prior(std::size_t dimension, const KernelConfig& kernel) {
  if (dimension == 0) fail(ErrorKind::Input, "dimension must be at least 1");
  kernel.validate(dimension);
  LaplacePosterior p;
  p.dimension_ = dimension;
  p.kernel_ = kernel;
  return p;
}

LaplacePosterior::LaplacePosterior(std::vector<Point> points, KernelConfig kernel, Eigen::MatrixXd prior_covariance,
                                   Eigen::MatrixXd prior_chol, Eigen::VectorXd whitened_utilities,
                                   Eigen::VectorXd map_utilities, Eigen::MatrixXd hessian_w, double log_likelihood,
                                   std::size_t iterations)
    : dimension_(points.empty() ? 0 : static_cast<std::size_t>(points.front().size())),
      points_(std::move(points)),
      kernel_(std::move(kernel)),
      prior_covariance_(std::move(prior_covariance)),
      prior_chol_(std::move(prior_chol)),
      map_utilities_(std::move(map_utilities)),
      hessian_w_(std::move(hessian_w)),
      iterations_(iterations) {
  const auto n = prior_chol_.rows();
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n);
  b.noalias() += prior_chol_.transpose() * hessian_w_ * prior_chol_;
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, "I + L'WL is not positive definite");
  correction_chol_ = llt.matrixL();
  alpha_ = prior_chol_.transpose().triangularView<Eigen::Upper>().solve(whitened_utilities);

  const double log_det_b = 2.0 * correction_chol_.diagonal().array().log().sum();
  log_evidence_ = log_likelihood - 0.5 * whitened_utilities.squaredNorm() - 0.5 * log_det_b;
}

Eigen::MatrixXd LaplacePosterior::posterior_covariance() const {
  // L B^-1 L' with B = M M'
  const Eigen::MatrixXd m_inv_lt = correction_chol_.triangularView<Eigen::Lower>().solve(prior_chol_.transpose());
  return m_inv_lt.transpose() * m_inv_lt;
}

QueryProjection LaplacePosterior::project(const Point& x) const {
  if (static_cast<std::size_t>(x.size()) != dimension_) {
    fail(ErrorKind::Input, "query has dimension " + std::to_string(x.size()) + ", expected " +
                               std::to_string(dimension_));
  }
  QueryProjection q;
  q.x = x;
  q.prior_variance = kernel_.signal_variance;
  const auto n = static_cast<Eigen::Index>(points_.size());
  if (n == 0) return q;
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel_(points_[static_cast<std::size_t>(i)], x);
  q.mean = k.dot(alpha_);
  q.whitened = prior_chol_.triangularView<Eigen::Lower>().solve(k);
  q.corrected = correction_chol_.triangularView<Eigen::Lower>().solve(q.whitened);
  return q;
}

double LaplacePosterior::covariance(const QueryProjection& a, const QueryProjection& b) const {
  double c = kernel_(a.x, b.x);
  if (!points_.empty()) c += -a.whitened.dot(b.whitened) + a.corrected.dot(b.corrected);
  return c;
}

double LaplacePosterior::variance(const QueryProjection& a) const {
  double v = a.prior_variance;
  if (!points_.empty()) v += -a.whitened.squaredNorm() + a.corrected.squaredNorm();
  return v;
}

double LaplacePosterior::mean(const Point& x) const { return project(x).mean; }

PredictiveDistribution LaplacePosterior::predict(std::span<const Point> queries) const {
  constexpr double kClampTolerance = 1e-8;
  std::vector<QueryProjection> proj;
  proj.reserve(queries.size());
  for (const auto& q : queries) proj.push_back(project(q));

  const auto n = static_cast<Eigen::Index>(queries.size());
  PredictiveDistribution out;
  out.mean.resize(n);
  out.covariance.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.mean[i] = proj[static_cast<std::size_t>(i)].mean;
    for (Eigen::Index j = 0; j <= i; ++j) {
      out.covariance(i, j) = out.covariance(j, i) =
          covariance(proj[static_cast<std::size_t>(i)], proj[static_cast<std::size_t>(j)]);
    }
    double& d = out.covariance(i, i);
    if (d < -kClampTolerance) fail(ErrorKind::Numerical, "negative predictive variance " + std::to_string(d));
    if (d < 0.0) d = 0.0;
  }
  return out;
}

PredictiveDistribution predict(const LaplacePosterior& posterior, std::span<const Point> queries,
                               const KernelConfig& kernel) {
  if (!(kernel == posterior.kernel())) {
    fail(ErrorKind::Input, "prediction kernel differs from the kernel the posterior was fitted with");
  }
  return posterior.predict(queries);
}

// ---------------------------------------------------------------------------

LaplacePosterior fit_laplace(const ComparisonDataset& data, const KernelConfig& kernel, const NoiseConfig& noise,
                             const NewtonOptions& options) {
  if (data.empty()) fail(ErrorKind::Input, "fit_laplace needs at least one duel");
  kernel.validate(data.dimension());

  Eigen::MatrixXd sigma = kernel_matrix(data.points(), kernel);
  PairwiseObjective objective(data, sigma, noise);
  const Eigen::MatrixXd L = objective.prior_factor().matrixL();
  const auto Lt = L.transpose();
  const auto n = sigma.rows();

  // Newton iterations in whitened coordinates f = L u, where the Hessian
  // I + L' W L is bounded below by the identity.
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  auto psi = [&](const Eigen::VectorXd& uu, const Eigen::VectorXd& ff) {
    return -objective.log_likelihood(ff) + 0.5 * uu.squaredNorm();
  };
  double current = psi(u, f);
  double grad_norm = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  for (;; ++iter) {
    const Eigen::VectorXd g = objective.log_likelihood_gradient(f);
    // gradient w.r.t. f: Sigma^-1 f - g = L^-T u - g
    const Eigen::VectorXd grad_f = Lt.triangularView<Eigen::Upper>().solve(u) - g;
    grad_norm = grad_f.lpNorm<Eigen::Infinity>();
    if (grad_norm < options.gradient_tolerance) break;
    if (iter == options.max_iterations) {
      throw FitError("Laplace mode search did not converge in " + std::to_string(options.max_iterations) +
                         " iterations (gradient max-norm " + std::to_string(grad_norm) + ")",
                     grad_norm);
    }

    const Eigen::MatrixXd w = objective.hessian_w(f);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    h.noalias() += Lt * w * L;
    Eigen::LLT<Eigen::MatrixXd> h_llt(h);
    if (h_llt.info() != Eigen::Success) fail(ErrorKind::Numerical, "Newton system is not positive definite");
    const Eigen::VectorXd grad_u = u - Lt * g;
    const Eigen::VectorXd step = -h_llt.solve(grad_u);

    double t = 1.0;
    Eigen::VectorXd u_next = u + step;
    Eigen::VectorXd f_next = L * u_next;
    double next = psi(u_next, f_next);
    for (std::size_t halving = 0; !(next <= current) && halving < options.max_halvings; ++halving) {
      t *= 0.5;
      u_next = u + t * step;
      f_next = L * u_next;
      next = psi(u_next, f_next);
    }
    if (!(next <= current)) {
      // No descent along the Newton direction: the iterate is as good as
      // floating point allows. Accept if the gradient is already tiny.
      if (grad_norm < 1e3 * options.gradient_tolerance) break;
      throw FitError("line search failed to decrease the negative log posterior (gradient max-norm " +
                         std::to_string(grad_norm) + ")",
                     grad_norm);
    }
    u = std::move(u_next);
    f = std::move(f_next);
    current = next;
  }

  Eigen::MatrixXd w = objective.hessian_w(f);
  const double ll = objective.log_likelihood(f);
  return LaplacePosterior(data.points(), kernel, std::move(sigma), L, u, f, std::move(w), ll, iter);
}

LaplacePosterior fit_with_lengthscale_search(const ComparisonDataset& data, const KernelConfig& base,
                                             const NoiseConfig& noise, std::span<const double> grid,
                                             const NewtonOptions& options) {
  if (grid.empty()) return fit_laplace(data, base, noise, options);
  std::optional<LaplacePosterior> best;
  std::optional<FitError> last_error;
  for (double l : grid) {
    try {
      auto candidate = fit_laplace(data, KernelConfig::shared(l, base.signal_variance), noise, options);
      if (!best || candidate.log_evidence() > best->log_evidence()) best = std::move(candidate);
    } catch (const FitError& e) {
      last_error = e;
    }
  }
  if (!best) throw *last_error;
  return std::move(*best);
}

}  // namespace prefopt
