#include <doctest.h>

#include <cmath>
#include <sstream>

#include "prefopt/benchmark.hpp"
#include "prefopt/error.hpp"

using namespace prefopt;
using nlohmann::json;

namespace {

BenchmarkConfig tiny_config() {
  return benchmark_config_from_json(json::parse(R"({
    "problems": ["branin", {"name": "gp_sample", "dimension": 1, "seed": 4}],
    "algorithms": ["crashpbo", "eubo", "random"],
    "modes": ["best", "two_new"],
    "repetitions": 2,
    "budget_multiplier": 3,
    "grid_resolution": 30,
    "seed": 7,
    "model": {"restarts": 4, "local_steps": 15}
  })"));
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

CellResult cell(const std::string& problem, double perf, std::size_t crashes, std::size_t experiments) {
  CellResult c;
  c.problem = problem;
  c.algorithm = Algorithm::CrashPbo;
  c.mode = ComparisonMode::CompareToBest;
  c.performance = perf;
  c.crashes = crashes;
  c.experiments = experiments;
  return c;
}

}  // namespace

TEST_CASE("iteration counts per comparison mode") {
  CHECK(iterations_for_budget(ComparisonMode::CompareToBest, 20) == 18);
  CHECK(iterations_for_budget(ComparisonMode::CompareToLast, 20) == 18);
  CHECK(iterations_for_budget(ComparisonMode::TwoNew, 20) == 9);
  CHECK(iterations_for_budget(ComparisonMode::TwoNew, 21) == 9);
  CHECK_THROWS_AS(iterations_for_budget(ComparisonMode::TwoNew, 2), Error);
}

TEST_CASE("config parsing") {
  const BenchmarkConfig c = tiny_config();
  REQUIRE(c.problems.size() == 2);
  CHECK(c.problems[0].name == "branin");
  CHECK(c.problems[1].dimension == 1);
  CHECK(c.problems[1].seed == 4);
  CHECK(c.model.acquisition.restarts == 4);
  CHECK(c.grid_resolution == 30u);

  const BenchmarkConfig back = benchmark_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(benchmark_config_from_json(json::parse(R"({"problems": []})")), Error);
  CHECK_THROWS_AS(benchmark_config_from_json(json::parse(R"({"problems": ["branin"], "algorithms": ["grid"]})")),
                  Error);
  CHECK_THROWS_AS(benchmark_config_from_json(json::parse(R"({"problems": ["branin"], "repetitions": 0})")), Error);
  CHECK_THROWS_AS(benchmark_config_from_json(json::parse(R"({"problems": [{"dimension": 2}]})")), Error);
  CHECK_THROWS_AS(benchmark_config_from_json(json::parse("[1, 2]")), Error);
}

TEST_CASE("cells, experiment accounting and parallel determinism") {
  const BenchmarkConfig c = tiny_config();
  const BenchmarkResult serial = run_benchmark(c, 1);
  // per problem and repetition: 2 preferential algorithms x 2 modes + random search
  REQUIRE(serial.cells.size() == 2 * 2 * 5);
  for (const auto& cell : serial.cells) {
    CAPTURE(cell.problem);
    CHECK(cell.error.empty());
    CHECK(cell.performance >= 0.0);
    CHECK(cell.performance <= 1.0);
    CHECK(cell.crashes <= cell.experiments);
    const std::size_t budget = 3 * (cell.problem == "branin" ? 2 : 1);
    if (!cell.mode) {
      CHECK(cell.experiments == budget);
    } else if (*cell.mode == ComparisonMode::CompareToBest) {
      CHECK(cell.iterations == budget - 2);
      CHECK(cell.experiments == 2 + cell.iterations);
    } else {
      CHECK(cell.experiments == 2 + 2 * cell.iterations);
    }
  }

  const BenchmarkResult parallel = run_benchmark(c, 4);
  REQUIRE(parallel.cells.size() == serial.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) CHECK(same_outcome(serial.cells[i], parallel.cells[i]));

  std::ostringstream a, b;
  write_csv(serial, a);
  write_csv(parallel, b);
  CHECK(a.str() == b.str());
}

TEST_CASE("random search crashes on about half of its experiments") {
  BenchmarkConfig c;
  c.problems = {{"branin", 0, 0}};
  c.seed = 3;
  c.budget_multiplier = 10;
  TestProblem thresholded = make_branin();
  const GridSummary grid = summarize_grid(thresholded, evaluation_points(2, GridSpec::default_for(2)));
  thresholded.set_crash_threshold(grid.threshold);
  std::size_t crashes = 0, experiments = 0;
  for (std::size_t rep = 0; rep < 200; ++rep) {
    const CellResult r = run_cell(c, 0, thresholded, grid, Algorithm::RandomSearch, std::nullopt, rep);
    crashes += r.crashes;
    experiments += r.experiments;
  }
  // 4000 Bernoulli(0.5) draws: 3 standard deviations is about 0.024
  CHECK(std::abs(static_cast<double>(crashes) / static_cast<double>(experiments) - 0.5) < 0.03);
}

TEST_CASE("aggregates use the sample standard deviation") {
  std::vector<CellResult> cells{cell("a", 0.2, 1, 4), cell("a", 0.6, 3, 4), cell("b", 1.0, 0, 4)};
  cells.push_back(cell("b", 0.9, 0, 4));
  cells.back().error = "fit failed";
  cells.back().flagged = true;
  const auto rows = aggregate(cells);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].problem == "*");
  CHECK(rows[0].count == 3);
  CHECK(rows[0].flagged == 1);
  CHECK(rows[0].mean_performance == doctest::Approx(0.6));
  CHECK(rows[0].std_performance == doctest::Approx(0.4));  // values 0.2, 0.6, 1.0
  CHECK(rows[0].mean_crash_rate == doctest::Approx(1.0 / 3.0));
  // crash rates 0.25, 0.75, 0 around a mean of 1/3
  CHECK(rows[0].std_crash_rate == doctest::Approx(std::sqrt((1.0 / 144 + 25.0 / 144 + 16.0 / 144) / 2.0)));
  CHECK(rows[1].problem == "a");
  CHECK(rows[1].std_performance == doctest::Approx(std::sqrt(0.08)));
  CHECK(rows[2].problem == "b");
  CHECK(rows[2].count == 1);
  CHECK(rows[2].std_performance == 0.0);

  BenchmarkResult r;
  r.cells = cells;
  r.aggregates = rows;
  CHECK(r.find(Algorithm::CrashPbo, ComparisonMode::CompareToBest) == &r.aggregates[0]);
  CHECK(r.find(Algorithm::CrashPbo, ComparisonMode::CompareToBest, "b") == &r.aggregates[2]);
  CHECK(r.find(Algorithm::Eubo, ComparisonMode::CompareToBest) == nullptr);
}

TEST_CASE("CSV export") {
  std::ostringstream empty;
  write_csv(BenchmarkResult{}, empty);
  const auto header = lines_of(empty.str());
  REQUIRE(header.size() == 1);
  CHECK(header[0].rfind("row_type,problem,algorithm,mode,repetition", 0) == 0);

  BenchmarkResult r;
  r.cells = {cell("a", 0.25, 1, 4), cell("a", 0.75, 2, 4)};
  r.cells[1].error = "bad \"thing\"";
  r.aggregates = aggregate(r.cells);
  std::ostringstream out;
  write_csv(r, out);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 1 + 2 + 2);
  CHECK(lines[1] == "cell,a,crashpbo,best,0,1,0.25,0,0.25,0,1,4,0,0,");
  CHECK(lines[2].find("\"bad \"\"thing\"\"\"") != std::string::npos);
  CHECK(fields(lines[3]) == fields(header[0]));
  CHECK(lines[3].rfind("aggregate,*,crashpbo,best,,1,0.25,0,0.25,0", 0) == 0);
}

TEST_CASE("JSON export round-trips") {
  BenchmarkResult r;
  r.cells = {cell("a", 0.25, 1, 4), cell("b", 0.5, 0, 4)};
  r.cells[1].algorithm = Algorithm::RandomSearch;
  r.cells[1].mode = std::nullopt;
  r.cells[0].wall_time = 1.5;
  r.aggregates = aggregate(r.cells);
  const BenchmarkResult back = benchmark_result_from_json(to_json(r));
  REQUIRE(back.cells.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(same_outcome(back.cells[i], r.cells[i]));
  CHECK_FALSE(back.cells[1].mode.has_value());
  CHECK(back.aggregates.size() == r.aggregates.size());
  CHECK(to_json(back) == to_json(r));

  json bad = to_json(r);
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(benchmark_result_from_json(bad), Error);
}
