#pragma once

// Synthetic benchmark runner: every (problem, algorithm, mode, repetition)
// cell runs the optimizer against a simulated decision maker and reports the
// normalised final performance and crashes per experiment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefopt/acquisition.hpp"
#include "prefopt/test_problems.hpp"

namespace prefopt {

enum class Algorithm { CrashPbo, Eubo, RandomSearch };

std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);

struct ProblemSpec {
  std::string name;
  std::size_t dimension = 0;  // 0: the family's native dimension
  std::uint64_t seed = 0;     // sample-path seed
};

struct ModelSettings {
  double lengthscale = 0.3;
  double signal_variance = 1.0;
  bool lengthscale_search = false;
  std::optional<double> noise_sigma;  // model noise; defaults to the oracle noise
  AcquisitionConfig acquisition;
};

struct BenchmarkConfig {
  std::vector<ProblemSpec> problems;
  std::vector<Algorithm> algorithms{Algorithm::CrashPbo, Algorithm::Eubo, Algorithm::RandomSearch};
  std::vector<ComparisonMode> modes{ComparisonMode::CompareToBest};
  std::size_t repetitions = 20;
  std::size_t budget_multiplier = 10;  // experiments = multiplier * d
  std::optional<std::size_t> grid_resolution;  // per-axis override for d <= 3
  std::uint64_t seed = 0;
  double noise_sigma = 0.1;
  ModelSettings model;

  void validate() const;
};

BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkConfig& c);

struct CellResult {
  std::string problem;
  Algorithm algorithm = Algorithm::CrashPbo;
  std::optional<ComparisonMode> mode;  // none for random search
  std::size_t repetition = 0;
  double performance = 0.0;
  std::size_t crashes = 0;
  std::size_t experiments = 0;
  std::size_t iterations = 0;
  std::size_t failed_fits = 0;
  std::size_t rejected_initializations = 0;
  bool flagged = false;  // more than 10% of fits failed
  double wall_time = 0.0;  // seconds; excluded from equality and CSV
  std::string error;

  double crash_rate() const {
    return experiments == 0 ? 0.0 : static_cast<double>(crashes) / static_cast<double>(experiments);
  }
};

struct AggregateRow {
  std::string problem;  // "*" across all problems
  Algorithm algorithm = Algorithm::CrashPbo;
  std::optional<ComparisonMode> mode;
  std::size_t count = 0;
  double mean_performance = 0.0;
  double std_performance = 0.0;
  double mean_crash_rate = 0.0;
  double std_crash_rate = 0.0;
  std::size_t flagged = 0;
};

struct BenchmarkResult {
  std::vector<CellResult> cells;
  std::vector<AggregateRow> aggregates;

  /// First aggregate matching the selector, across all problems when `problem` is "*".
  const AggregateRow* find(Algorithm algorithm, std::optional<ComparisonMode> mode,
                           const std::string& problem = "*") const;
};

/// Experiment count and loop iterations for a mode: the initial duel costs
/// two experiments, each later duel one (anchored) or two (two new points).
std::size_t iterations_for_budget(ComparisonMode mode, std::size_t experiments);

/// One benchmark cell. Deterministic in (config.seed, problem index, repetition).
CellResult run_cell(const BenchmarkConfig& config, std::size_t problem_index, const TestProblem& problem,
                    const GridSummary& grid, Algorithm algorithm, std::optional<ComparisonMode> mode,
                    std::size_t repetition);

/// Runs every cell; `workers` > 1 evaluates cells on a thread pool. Results
/// are ordered by cell index regardless of scheduling.
BenchmarkResult run_benchmark(const BenchmarkConfig& config, unsigned workers = 1);

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells);

enum class ExportFormat { Csv, Json };

void write_csv(const BenchmarkResult& result, std::ostream& out);
nlohmann::json to_json(const BenchmarkResult& result);
BenchmarkResult benchmark_result_from_json(const nlohmann::json& j);
void export_results(const BenchmarkResult& result, const std::filesystem::path& path, ExportFormat format);

/// Table with columns algorithm, mode, mean perf, std perf, mean crashes/experiment, std.
void print_summary(const BenchmarkResult& result, std::ostream& out);

bool same_outcome(const CellResult& a, const CellResult& b);

}  // namespace prefopt
