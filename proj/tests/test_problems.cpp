#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "prefopt/error.hpp"
#include "prefopt/test_problems.hpp"

using namespace prefopt;

namespace {

Point pt(std::initializer_list<double> v) {
  Point x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double c : v) x[i++] = c;
  return x;
}

double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("Branin maxima") {
  const TestProblem branin = make_branin();
  const double pi = std::numbers::pi;
  for (const auto& [x1, x2] : {std::pair{-pi, 12.275}, std::pair{pi, 2.275}, std::pair{9.42478, 2.475}}) {
    CHECK(branin(pt({(x1 + 5.0) / 15.0, x2 / 15.0})) == doctest::Approx(-0.397887).epsilon(1e-5));
  }
  const GridSummary grid = summarize_grid(branin, evaluation_points(2, GridSpec::default_for(2)));
  CHECK(grid.max <= -0.397887 + 1e-6);
  CHECK(grid.max > -0.45);
}

TEST_CASE("Ackley optimum sits at the centre") {
  const TestProblem ackley = make_ackley();
  CHECK(std::abs(ackley(pt({0.5, 0.5}))) < 1e-12);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) CHECK(ackley(pt({u(rng), u(rng)})) < 0.0);
  CHECK(make_ackley(5)(Point::Constant(5, 0.5)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Hartmann6 global maximum") {
  const TestProblem h = make_hartmann6();
  CHECK(h(pt({0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573})) == doctest::Approx(3.32237).epsilon(1e-5));
}

TEST_CASE("Cosine8 maximum") {
  const TestProblem c = make_cosine8();
  CHECK(c(Point::Constant(8, 0.5)) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(c(Point::Constant(8, 0.0)) == doctest::Approx(8.0 * (0.1 * std::cos(-5.0 * std::numbers::pi) - 1.0)));
}

TEST_CASE("problems reject points outside their domain") {
  CHECK_THROWS_AS(make_branin()(pt({0.5})), Error);
  CHECK_THROWS_AS(make_branin()(pt({0.5, 1.01})), Error);
  CHECK_THROWS_AS(make_problem("rosenbrock"), Error);
  CHECK_THROWS_AS(make_problem("branin", 3), Error);
  CHECK_THROWS_AS(make_problem("gp_sample"), Error);
  CHECK(make_problem("ackley", 4).dimension() == 4);
}

TEST_CASE("GP sample paths have the prior's covariance") {
  const Point a = pt({0.2, 0.4}), b = pt({0.35, 0.5}), c = pt({0.9, 0.1});
  const std::size_t draws = 4000;
  double saa = 0, sab = 0, sac = 0, mean_a = 0;
  for (std::size_t s = 0; s < draws; ++s) {
    const GpSamplePath path(2, 1000 + s);
    const double fa = path(a), fb = path(b), fc = path(c);
    saa += fa * fa;
    sab += fa * fb;
    sac += fa * fc;
    mean_a += fa;
  }
  const double n = static_cast<double>(draws);
  const double var = saa / n;
  CHECK(var > 0.8);
  CHECK(var < 1.2);
  CHECK(std::abs(mean_a / n) < 0.1);
  // Monte Carlo tolerance: about 4 standard errors of a product of unit normals
  CHECK(std::abs(sab / n - oracle::se_kernel(a, b, 0.3, 1.0)) < 0.07);
  CHECK(std::abs(sac / n - oracle::se_kernel(a, c, 0.3, 1.0)) < 0.07);

  const GpSamplePath same(2, 7), again(2, 7);
  CHECK(same(a) == again(a));
}

TEST_CASE("thresholds are grid medians") {
  const TestProblem linear("linear", 1, [](const Point& x) { return x[0]; });
  CHECK(compute_threshold(linear, GridSpec{101, 0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(compute_threshold(linear, GridSpec{100, 0}) == doctest::Approx(0.5).epsilon(1e-15));

  const TestProblem flat("flat", 2, [](const Point&) { return 3.25; });
  const GridSummary g = summarize_grid(flat, evaluation_points(2, GridSpec{10, 0}));
  CHECK(g.threshold == 3.25);
  CHECK(normalized_performance(3.25, g) == 1.0);

  const TestProblem branin = make_branin();
  const auto pts = evaluation_points(2, GridSpec::default_for(2));
  CHECK(pts.size() == 10000);
  std::vector<double> values;
  for (const auto& x : pts) values.push_back(branin(x));
  const GridSummary bg = summarize_grid(branin, pts);
  CHECK(bg.threshold == sorted_median(values));
  CHECK(bg.min == *std::min_element(values.begin(), values.end()));
  CHECK(normalized_performance(bg.max, bg) == 1.0);
  CHECK(normalized_performance(bg.min - 1.0, bg) == 0.0);
  // half the grid lies at or above the median
  const auto above = std::count_if(values.begin(), values.end(), [&](double v) { return v >= bg.threshold; });
  CHECK(above == 5000);
}

TEST_CASE("evaluation points") {
  CHECK(evaluation_points(3, GridSpec::default_for(3)).size() == 27000);
  const auto sobol = evaluation_points(6, GridSpec::default_for(6));
  CHECK(sobol.size() == 32768);
  for (const auto& x : sobol) REQUIRE(in_unit_cube(x));
  CHECK_FALSE(same_point(sobol[1], sobol[2]));
  CHECK_THROWS_AS(evaluation_points(1, GridSpec{1, 0}), Error);
}

TEST_CASE("simulated decision maker") {
  const TestProblem flat("flat", 1, [](const Point&) { return 0.0; });
  std::mt19937_64 rng(5);
  const Point a = pt({0.2}), b = pt({0.7});
  std::size_t first = 0;
  const std::size_t trials = 100'000;
  for (std::size_t i = 0; i < trials; ++i) {
    first += simulate_dm(flat, a, b, rng).pi == Preference::FirstPreferred ? 1 : 0;
  }
  CHECK(std::abs(static_cast<double>(first) / trials - 0.5) < 0.01);

  // P(a preferred) = Phi(delta / (sqrt(2) sigma)) for utilities differing by delta
  const TestProblem slope("slope", 1, [](const Point& x) { return x[0]; });
  first = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    first += simulate_dm(slope, pt({0.6}), pt({0.5}), rng).pi == Preference::FirstPreferred ? 1 : 0;
  }
  const double expected = oracle::normal_cdf(0.1 / (std::sqrt(2.0) * 0.1));
  CHECK(std::abs(static_cast<double>(first) / trials - expected) < 0.01);

  TestProblem crashing("crashing", 1, [](const Point& x) { return x[0]; });
  crashing.set_crash_threshold(0.5);
  const DuelFeedback f = simulate_dm(crashing, pt({0.2}), pt({0.9}), rng);
  CHECK_FALSE(f.s_a);
  CHECK(f.s_b);
  CHECK_FALSE(f.pi.has_value());
  const DuelFeedback plain = simulate_dm(crashing, pt({0.2}), pt({0.9}), rng, OracleKind::PlainPreference);
  CHECK(plain.pi.has_value());
  CHECK_FALSE(plain.s_a);
  CHECK(simulate_dm(crashing, pt({0.5}), pt({0.9}), rng).s_a);  // the threshold itself is feasible
}
