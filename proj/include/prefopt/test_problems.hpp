#pragma once

// Synthetic maximization problems on the unit cube, their crash thresholds,
// and a simulated decision maker.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "prefopt/crash_feedback.hpp"
#include "prefopt/types.hpp"

namespace prefopt {

class TestProblem {
 public:
  using Objective = std::function<double(const Point&)>;

  TestProblem(std::string name, std::size_t dimension, Objective objective, double noise_sigma = 0.1);

  const std::string& name() const { return name_; }
  std::size_t dimension() const { return dimension_; }
  double noise_sigma() const { return noise_sigma_; }
  double crash_threshold() const { return threshold_; }
  void set_crash_threshold(double tau) { threshold_ = tau; }
  void set_noise_sigma(double sigma) { noise_sigma_ = sigma; }

  /// Noiseless objective; throws Input outside [0,1]^d.
  double operator()(const Point& x) const;
  /// S(x): true iff the noiseless objective reaches the crash threshold.
  bool satisfied(const Point& x) const { return (*this)(x) >= threshold_; }

 private:
  std::string name_;
  std::size_t dimension_;
  Objective objective_;
  double noise_sigma_;
  double threshold_ = -std::numeric_limits<double>::infinity();
};

// Standard test functions, rescaled from their native boxes to the unit cube
// and oriented for maximization.
TestProblem make_branin();
TestProblem make_ackley(std::size_t dimension = 2);
TestProblem make_hartmann6();
TestProblem make_cosine8();

/// Random Fourier feature draw from GP(0, SE(lengthscale, variance)).
class GpSamplePath {
 public:
  GpSamplePath(std::size_t dimension, std::uint64_t seed, double lengthscale = 0.3, double variance = 1.0,
               std::size_t features = 2048);

  double operator()(const Point& x) const;
  std::size_t dimension() const { return dimension_; }

 private:
  std::size_t dimension_;
  double amplitude_;
  Eigen::MatrixXd frequencies_;  // features x dimension
  Eigen::VectorXd phases_;
  Eigen::VectorXd weights_;
};

TestProblem make_gp_sample_path(std::size_t dimension, std::uint64_t seed, double lengthscale = 0.3,
                                double variance = 1.0, std::size_t features = 2048);

/// Looks up a problem by name: branin, ackley, hartmann6, cosine8, gp_sample.
/// `dimension` and `seed` are used where the family takes them.
TestProblem make_problem(const std::string& name, std::size_t dimension = 0, std::uint64_t seed = 0);

/// Point set used for thresholds and normalisation: a full grid with
/// `per_axis` points per axis (d <= 3), otherwise a Sobol sequence of
/// `sobol_points` points.
struct GridSpec {
  std::size_t per_axis = 100;
  std::size_t sobol_points = std::size_t{1} << 15;

  /// 100 per axis for d <= 2, 30 for d = 3, 2^15 Sobol points beyond.
  static GridSpec default_for(std::size_t dimension);
};

std::vector<Point> evaluation_points(std::size_t dimension, const GridSpec& spec);

struct GridSummary {
  double threshold = 0.0;  // median objective value
  double min = 0.0;
  double max = 0.0;
  Point argmax;
  std::size_t count = 0;
};

GridSummary summarize_grid(const TestProblem& problem, const std::vector<Point>& points);

/// Median objective value over the grid.
double compute_threshold(const TestProblem& problem, const GridSpec& spec);

/// Min-max normalisation against the grid, clamped to [0,1]; a flat grid maps to 1.
double normalized_performance(double value, const GridSummary& grid);

enum class OracleKind {
  CrashReporting,  // preference only when both succeed
  PlainPreference, // always compares noisy values; satisfactions still reported
};

/// Draws noisy utilities y = f(x) + eps for both points and reports
/// noiseless satisfaction S(x) = [f(x) >= tau].
DuelFeedback simulate_dm(const TestProblem& problem, const Point& x_a, const Point& x_b, std::mt19937_64& rng,
                         OracleKind kind = OracleKind::CrashReporting);

}  // namespace prefopt
