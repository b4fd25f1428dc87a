#include "prefopt/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "prefopt/error.hpp"
#include "prefopt/optimizer.hpp"

namespace prefopt {

using nlohmann::json;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::CrashPbo: return "crashpbo";
    case Algorithm::Eubo: return "eubo";
    case Algorithm::RandomSearch: return "random";
  }
  return "?";
}

Algorithm algorithm_from_string(std::string_view name) {
  if (name == "crashpbo" || name == "CrashPBO") return Algorithm::CrashPbo;
  if (name == "eubo" || name == "EUBO") return Algorithm::Eubo;
  if (name == "random" || name == "RandomSearch" || name == "random_search") return Algorithm::RandomSearch;
  fail(ErrorKind::Input, "unknown algorithm '" + std::string(name) + "'");
}

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  std::uint64_t x = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t master, std::size_t problem, std::size_t rep, std::uint64_t purpose,
                          std::uint64_t extra = 0) {
  return mix(mix(mix(mix(master, problem), rep), purpose), extra);
}

constexpr std::uint64_t kInitStream = 1, kOracleStream = 2, kRandomStream = 3, kModelStream = 4, kFallbackStream = 5;

Point uniform_point(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point x(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
  return x;
}

std::string mode_name(const std::optional<ComparisonMode>& m) { return m ? std::string(to_string(*m)) : "none"; }

std::optional<ComparisonMode> mode_from_name(const std::string& s) {
  if (s == "none") return std::nullopt;
  return comparison_mode_from_string(s);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.empty()) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + '"';
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

CellResult run_random_search(const BenchmarkConfig& config, std::size_t problem_index, const TestProblem& problem,
                             const GridSummary& grid, std::size_t repetition) {
  CellResult r;
  std::mt19937_64 rng(stream_seed(config.seed, problem_index, repetition, kRandomStream));
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t budget = config.budget_multiplier * problem.dimension();
  std::optional<Point> best;
  double best_y = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < budget; ++i) {
    Point x = uniform_point(problem.dimension(), rng);
    const double f = problem(x);
    const double y = f + problem.noise_sigma() * noise(rng);
    ++r.experiments;
    if (f < problem.crash_threshold()) {
      ++r.crashes;
    } else if (y > best_y) {
      best_y = y;
      best = std::move(x);
    }
  }
  r.iterations = budget;
  r.performance = best ? normalized_performance(problem(*best), grid) : 0.0;
  return r;
}

CellResult run_preferential(const BenchmarkConfig& config, std::size_t problem_index, const TestProblem& problem,
                            const GridSummary& grid, Algorithm algorithm, ComparisonMode mode,
                            std::size_t repetition) {
  CellResult r;
  const std::size_t d = problem.dimension();
  const OracleKind oracle =
      algorithm == Algorithm::CrashPbo ? OracleKind::CrashReporting : OracleKind::PlainPreference;

  // Shared across algorithms and modes so every method starts from the same duel.
  std::mt19937_64 init_rng(stream_seed(config.seed, problem_index, repetition, kInitStream));
  Point x_a, x_b;
  for (;;) {
    x_a = uniform_point(d, init_rng);
    x_b = uniform_point(d, init_rng);
    if (problem.satisfied(x_a) || problem.satisfied(x_b)) break;
    if (++r.rejected_initializations > 100000) fail(ErrorKind::Initialization, "no feasible initial point found");
  }
  const DuelFeedback initial = simulate_dm(problem, x_a, x_b, init_rng, oracle);
  r.experiments = 2;
  r.crashes = (initial.s_a ? 0 : 1) + (initial.s_b ? 0 : 1);

  OptimizerConfig oc;
  oc.dimension = d;
  oc.budget = iterations_for_budget(mode, config.budget_multiplier * d);
  oc.mode = mode;
  oc.kernel = KernelConfig::shared(config.model.lengthscale, config.model.signal_variance);
  oc.noise.sigma = config.model.noise_sigma.value_or(config.noise_sigma);
  oc.acquisition = config.model.acquisition;
  oc.seed = stream_seed(config.seed, problem_index, repetition, kModelStream,
                        static_cast<std::uint64_t>(algorithm) * 16 + static_cast<std::uint64_t>(mode));
  oc.crash_feedback = algorithm == Algorithm::CrashPbo;
  oc.lengthscale_search = config.model.lengthscale_search;

  Optimizer opt = Optimizer::create(oc, initial);
  std::mt19937_64 oracle_rng(stream_seed(config.seed, problem_index, repetition, kOracleStream,
                                         static_cast<std::uint64_t>(algorithm) * 16 + static_cast<std::uint64_t>(mode)));
  std::mt19937_64 fallback_rng(stream_seed(config.seed, problem_index, repetition, kFallbackStream));

  for (std::size_t t = 0; t < oc.budget; ++t) {
    const ExploreResult step = propose_or_explore(opt, fallback_rng);
    if (step.fell_back) ++r.failed_fits;
    const auto& duel = step.duel;
    const DuelFeedback fb = simulate_dm(problem, duel.first, duel.second, oracle_rng, oracle);
    opt.submit(fb);
    r.experiments += mode == ComparisonMode::TwoNew ? 2 : 1;
    r.crashes += fb.s_a ? 0 : 1;
    if (mode == ComparisonMode::TwoNew && !fb.s_b) ++r.crashes;
  }
  r.iterations = oc.budget;

  std::optional<Point> best = opt.incumbent();
  if (!best) {
    ++r.failed_fits;
    best = recommend_incumbent_by_wins(opt.dataset(), opt.ledger());
  }
  r.performance = normalized_performance(problem(*best), grid);
  r.flagged = 10 * r.failed_fits > r.iterations;
  return r;
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (problems.empty()) fail(ErrorKind::Input, "benchmark config lists no problems");
  if (algorithms.empty()) fail(ErrorKind::Input, "benchmark config lists no algorithms");
  if (modes.empty()) fail(ErrorKind::Input, "benchmark config lists no comparison modes");
  if (repetitions < 1) fail(ErrorKind::Input, "repetitions must be >= 1");
  if (budget_multiplier < 1) fail(ErrorKind::Input, "budget_multiplier must be >= 1");
  if (noise_sigma < 0.0) fail(ErrorKind::Input, "noise_sigma must be nonnegative");
  if (grid_resolution && *grid_resolution < 2) fail(ErrorKind::Input, "grid_resolution must be >= 2");
  model.acquisition.validate();
}

BenchmarkConfig benchmark_config_from_json(const json& j) {
  try {
    if (!j.is_object()) fail(ErrorKind::Schema, "benchmark config must be a JSON object");
    BenchmarkConfig c;
    for (const auto& p : j.at("problems")) {
      ProblemSpec spec;
      if (p.is_string()) {
        spec.name = p.get<std::string>();
      } else {
        spec.name = p.at("name").get<std::string>();
        spec.dimension = p.value("dimension", std::size_t{0});
        spec.seed = p.value("seed", std::uint64_t{0});
      }
      c.problems.push_back(spec);
    }
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : j.at("algorithms")) c.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
    }
    if (j.contains("modes")) {
      c.modes.clear();
      for (const auto& m : j.at("modes")) c.modes.push_back(comparison_mode_from_string(m.get<std::string>()));
    }
    c.repetitions = j.value("repetitions", c.repetitions);
    c.budget_multiplier = j.value("budget_multiplier", c.budget_multiplier);
    if (j.contains("grid_resolution") && !j.at("grid_resolution").is_null()) {
      c.grid_resolution = j.at("grid_resolution").get<std::size_t>();
    }
    c.seed = j.value("seed", c.seed);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.lengthscale = m.value("lengthscale", c.model.lengthscale);
      c.model.signal_variance = m.value("signal_variance", c.model.signal_variance);
      c.model.lengthscale_search = m.value("lengthscale_search", c.model.lengthscale_search);
      if (m.contains("noise_sigma") && !m.at("noise_sigma").is_null()) {
        c.model.noise_sigma = m.at("noise_sigma").get<double>();
      }
      c.model.acquisition.restarts = m.value("restarts", c.model.acquisition.restarts);
      c.model.acquisition.local_steps = m.value("local_steps", c.model.acquisition.local_steps);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed benchmark config: ") + e.what());
  }
}

json to_json(const BenchmarkConfig& c) {
  json problems = json::array();
  for (const auto& p : c.problems) problems.push_back({{"name", p.name}, {"dimension", p.dimension}, {"seed", p.seed}});
  json algorithms = json::array();
  for (auto a : c.algorithms) algorithms.push_back(std::string(to_string(a)));
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(std::string(to_string(m)));
  return {{"problems", problems},
          {"algorithms", algorithms},
          {"modes", modes},
          {"repetitions", c.repetitions},
          {"budget_multiplier", c.budget_multiplier},
          {"grid_resolution", c.grid_resolution ? json(*c.grid_resolution) : json(nullptr)},
          {"seed", c.seed},
          {"noise_sigma", c.noise_sigma},
          {"model",
           {{"lengthscale", c.model.lengthscale},
            {"signal_variance", c.model.signal_variance},
            {"lengthscale_search", c.model.lengthscale_search},
            {"noise_sigma", c.model.noise_sigma ? json(*c.model.noise_sigma) : json(nullptr)},
            {"restarts", c.model.acquisition.restarts},
            {"local_steps", c.model.acquisition.local_steps}}}};
}

std::size_t iterations_for_budget(ComparisonMode mode, std::size_t experiments) {
  if (experiments < 3) fail(ErrorKind::Input, "budget must allow at least one duel after the initial one");
  const std::size_t remaining = experiments - 2;
  const std::size_t t = mode == ComparisonMode::TwoNew ? remaining / 2 : remaining;
  return std::max<std::size_t>(t, 1);
}

CellResult run_cell(const BenchmarkConfig& config, std::size_t problem_index, const TestProblem& problem,
                    const GridSummary& grid, Algorithm algorithm, std::optional<ComparisonMode> mode,
                    std::size_t repetition) {
  const auto start = std::chrono::steady_clock::now();
  CellResult r;
  try {
    if (algorithm == Algorithm::RandomSearch) {
      r = run_random_search(config, problem_index, problem, grid, repetition);
    } else {
      if (!mode) fail(ErrorKind::Input, "preferential algorithms need a comparison mode");
      r = run_preferential(config, problem_index, problem, grid, algorithm, *mode, repetition);
    }
  } catch (const std::exception& e) {
    r = CellResult{};
    r.error = e.what();
    r.flagged = true;
  }
  r.problem = problem.name();
  r.algorithm = algorithm;
  r.mode = algorithm == Algorithm::RandomSearch ? std::nullopt : mode;
  r.repetition = repetition;
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config, unsigned workers) {
  config.validate();
  std::vector<TestProblem> problems;
  std::vector<GridSummary> grids;
  for (const auto& spec : config.problems) {
    TestProblem p = make_problem(spec.name, spec.dimension, spec.seed);
    p.set_noise_sigma(config.noise_sigma);
    GridSpec gs = GridSpec::default_for(p.dimension());
    if (config.grid_resolution) gs.per_axis = *config.grid_resolution;
    GridSummary summary = summarize_grid(p, evaluation_points(p.dimension(), gs));
    p.set_crash_threshold(summary.threshold);
    problems.push_back(std::move(p));
    grids.push_back(std::move(summary));
  }

  struct Task {
    std::size_t problem;
    Algorithm algorithm;
    std::optional<ComparisonMode> mode;
    std::size_t repetition;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (auto alg : config.algorithms) {
      std::vector<std::optional<ComparisonMode>> modes;
      if (alg == Algorithm::RandomSearch) {
        modes.push_back(std::nullopt);
      } else {
        for (auto m : config.modes) modes.emplace_back(m);
      }
      for (const auto& m : modes) {
        for (std::size_t rep = 0; rep < config.repetitions; ++rep) tasks.push_back({p, alg, m, rep});
      }
    }
  }

  BenchmarkResult result;
  result.cells.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      result.cells[i] = run_cell(config, t.problem, problems[t.problem], grids[t.problem], t.algorithm, t.mode,
                                 t.repetition);
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  result.aggregates = aggregate(result.cells);
  return result;
}

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells) {
  // Keyed by (problem, algorithm, mode); "*" rows pool every problem.
  using Key = std::tuple<std::string, int, int>;
  std::map<Key, std::vector<const CellResult*>> groups;
  std::vector<Key> order;
  auto add = [&](const Key& k, const CellResult* c) {
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(c);
  };
  for (const auto& c : cells) {
    const int m = c.mode ? static_cast<int>(*c.mode) : -1;
    add({"*", static_cast<int>(c.algorithm), m}, &c);
  }
  for (const auto& c : cells) {
    const int m = c.mode ? static_cast<int>(*c.mode) : -1;
    add({c.problem, static_cast<int>(c.algorithm), m}, &c);
  }

  std::vector<AggregateRow> rows;
  for (const auto& key : order) {
    const auto& group = groups[key];
    AggregateRow row;
    row.problem = std::get<0>(key);
    row.algorithm = group.front()->algorithm;
    row.mode = group.front()->mode;
    std::vector<double> perf, crash;
    for (const auto* c : group) {
      if (c->flagged) ++row.flagged;
      if (!c->error.empty()) continue;
      perf.push_back(c->performance);
      crash.push_back(c->crash_rate());
    }
    row.count = perf.size();
    std::tie(row.mean_performance, row.std_performance) = mean_std(perf);
    std::tie(row.mean_crash_rate, row.std_crash_rate) = mean_std(crash);
    rows.push_back(row);
  }
  return rows;
}

const AggregateRow* BenchmarkResult::find(Algorithm algorithm, std::optional<ComparisonMode> mode,
                                          const std::string& problem) const {
  for (const auto& row : aggregates) {
    if (row.algorithm == algorithm && row.mode == mode && row.problem == problem) return &row;
  }
  return nullptr;
}

void write_csv(const BenchmarkResult& result, std::ostream& out) {
  out << "row_type,problem,algorithm,mode,repetition,count,performance,performance_std,crash_rate,crash_rate_std,"
         "crashes,experiments,failed_fits,flagged,error\n";
  for (const auto& c : result.cells) {
    out << "cell," << c.problem << ',' << to_string(c.algorithm) << ',' << mode_name(c.mode) << ',' << c.repetition
        << ",1," << fmt(c.performance) << ",0," << fmt(c.crash_rate()) << ",0," << c.crashes << ',' << c.experiments
        << ',' << c.failed_fits << ',' << (c.flagged ? 1 : 0) << ',' << csv_quote(c.error)
        << '\n';
  }
  for (const auto& a : result.aggregates) {
    out << "aggregate," << a.problem << ',' << to_string(a.algorithm) << ',' << mode_name(a.mode) << ",," << a.count
        << ',' << fmt(a.mean_performance) << ',' << fmt(a.std_performance) << ',' << fmt(a.mean_crash_rate) << ','
        << fmt(a.std_crash_rate) << ",,,," << a.flagged << ",\n";
  }
}

json to_json(const BenchmarkResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"problem", c.problem},
                     {"algorithm", std::string(to_string(c.algorithm))},
                     {"mode", mode_name(c.mode)},
                     {"repetition", c.repetition},
                     {"performance", c.performance},
                     {"crashes", c.crashes},
                     {"experiments", c.experiments},
                     {"iterations", c.iterations},
                     {"failed_fits", c.failed_fits},
                     {"rejected_initializations", c.rejected_initializations},
                     {"flagged", c.flagged},
                     {"wall_time", c.wall_time},
                     {"error", c.error}});
  }
  json aggregates = json::array();
  for (const auto& a : result.aggregates) {
    aggregates.push_back({{"problem", a.problem},
                          {"algorithm", std::string(to_string(a.algorithm))},
                          {"mode", mode_name(a.mode)},
                          {"count", a.count},
                          {"mean_performance", a.mean_performance},
                          {"std_performance", a.std_performance},
                          {"mean_crash_rate", a.mean_crash_rate},
                          {"std_crash_rate", a.std_crash_rate},
                          {"flagged", a.flagged}});
  }
  return {{"schema_version", 1}, {"cells", cells}, {"aggregates", aggregates}};
}

BenchmarkResult benchmark_result_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1) fail(ErrorKind::Schema, "unsupported benchmark result schema");
    BenchmarkResult r;
    for (const auto& c : j.at("cells")) {
      CellResult cell;
      cell.problem = c.at("problem").get<std::string>();
      cell.algorithm = algorithm_from_string(c.at("algorithm").get<std::string>());
      cell.mode = mode_from_name(c.at("mode").get<std::string>());
      cell.repetition = c.at("repetition").get<std::size_t>();
      cell.performance = c.at("performance").get<double>();
      cell.crashes = c.at("crashes").get<std::size_t>();
      cell.experiments = c.at("experiments").get<std::size_t>();
      cell.iterations = c.at("iterations").get<std::size_t>();
      cell.failed_fits = c.at("failed_fits").get<std::size_t>();
      cell.rejected_initializations = c.at("rejected_initializations").get<std::size_t>();
      cell.flagged = c.at("flagged").get<bool>();
      cell.wall_time = c.at("wall_time").get<double>();
      cell.error = c.at("error").get<std::string>();
      r.cells.push_back(std::move(cell));
    }
    for (const auto& a : j.at("aggregates")) {
      AggregateRow row;
      row.problem = a.at("problem").get<std::string>();
      row.algorithm = algorithm_from_string(a.at("algorithm").get<std::string>());
      row.mode = mode_from_name(a.at("mode").get<std::string>());
      row.count = a.at("count").get<std::size_t>();
      row.mean_performance = a.at("mean_performance").get<double>();
      row.std_performance = a.at("std_performance").get<double>();
      row.mean_crash_rate = a.at("mean_crash_rate").get<double>();
      row.std_crash_rate = a.at("std_crash_rate").get<double>();
      row.flagged = a.at("flagged").get<std::size_t>();
      r.aggregates.push_back(row);
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed benchmark result: ") + e.what());
  }
}

void export_results(const BenchmarkResult& result, const std::filesystem::path& path, ExportFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  if (format == ExportFormat::Csv) {
    write_csv(result, out);
  } else {
    out << to_json(result).dump(2) << '\n';
  }
  out.flush();
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

void print_summary(const BenchmarkResult& result, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-8s %10s %10s %16s %10s %6s\n", "algorithm", "mode", "mean_perf",
                "std_perf", "crashes/exp", "std", "n");
  out << line;
  for (const auto& a : result.aggregates) {
    if (a.problem != "*") continue;
    std::snprintf(line, sizeof line, "%-10s %-8s %10.3f %10.3f %16.3f %10.3f %6zu\n",
                  std::string(to_string(a.algorithm)).c_str(), mode_name(a.mode).c_str(), a.mean_performance,
                  a.std_performance, a.mean_crash_rate, a.std_crash_rate, a.count);
    out << line;
  }
}

bool same_outcome(const CellResult& a, const CellResult& b) {
  return a.problem == b.problem && a.algorithm == b.algorithm && a.mode == b.mode && a.repetition == b.repetition &&
         a.performance == b.performance && a.crashes == b.crashes && a.experiments == b.experiments &&
         a.iterations == b.iterations && a.failed_fits == b.failed_fits &&
         a.rejected_initializations == b.rejected_initializations && a.flagged == b.flagged && a.error == b.error;
}

}  // namespace prefopt
