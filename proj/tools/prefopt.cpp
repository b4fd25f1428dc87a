#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "prefopt/benchmark.hpp"
#include "prefopt/http_server.hpp"
#include "prefopt/serialization.hpp"
#include "prefopt/session_service.hpp"

namespace {

using nlohmann::json;
using namespace prefopt;

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CLI::ValidationError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, path + " is not valid JSON: " + e.what());
  }
}

struct BenchOptions {
  std::string config;
  std::string out;
  std::string format = "csv";
  unsigned parallel = 1;
  std::optional<std::uint64_t> seed;
};

int run_bench(const BenchOptions& o) {
  BenchmarkConfig config;
  try {
    config = benchmark_config_from_json(read_json_file(o.config));
  } catch (const Error& e) {
    // A config the parser rejects is a usage problem, not a failed run.
    throw CLI::ValidationError(o.config + ": " + e.what());
  }
  if (o.seed) config.seed = *o.seed;
  const BenchmarkResult result = run_benchmark(config, o.parallel);
  export_results(result, o.out, o.format == "json" ? ExportFormat::Json : ExportFormat::Csv);
  print_summary(result, std::cout);
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.error.empty() ? 0 : 1;
  if (failed > 0) std::cerr << failed << " cell(s) failed; see the error column\n";
  return kOk;
}

struct ServeOptions {
  std::string addr;
  std::string data_dir;
};

int run_serve(const ServeOptions& o) {
  ServerOptions options;
  std::string data_dir = apply_environment(options);
  if (!o.addr.empty()) parse_bind_address(o.addr, options);
  if (!o.data_dir.empty()) data_dir = o.data_dir;
  if (data_dir.empty()) data_dir = "prefopt-data";

  // Signals are taken synchronously by a dedicated thread; every other
  // thread inherits the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionManager sessions(std::filesystem::path{data_dir});
  HttpServer server(sessions, options);
  server.bind();
  std::cout << "prefopt: serving " << sessions.session_ids().size() << " session(s) from " << data_dir
            << " on http://" << options.host << ":" << server.port() << std::endl;

  std::thread waiter([&server, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  // Unblock the waiter if the server stopped for another reason.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  sessions.persist_all();
  std::cout << "prefopt: shut down" << std::endl;
  return kOk;
}

int run_replay(const std::string& path) {
  const json doc = read_json_file(path);
  const json* state = &doc;
  if (doc.contains("state")) {
    const int version = doc.value("schema_version", -1);
    if (version != kSessionSchemaVersion) {
      fail(ErrorKind::Schema, "session schema version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kSessionSchemaVersion) + ")");
    }
    state = &doc.at("state");
  }
  const ReplayReport report = verify_replay(*state);
  std::cout << "iterations:     " << report.iterations << '\n'
            << "recorded hash:  " << report.recorded_hash << '\n'
            << "replayed hash:  " << (report.replayed_hash.empty() ? "-" : report.replayed_hash) << '\n'
            << "ledger:         " << (report.ledger_match ? "match" : "differs") << '\n'
            << "result:         " << (report.match ? "MATCH" : "MISMATCH") << '\n';
  if (!report.match) std::cout << "detail:         " << report.detail << '\n';
  return report.match ? kOk : kRuntimeFailure;
}

struct DemoOptions {
  std::size_t budget = 12;
  std::uint64_t seed = 1;
  bool interactive = false;
};

int run_demo(const DemoOptions& o) {
  TestProblem problem = make_gp_sample_path(1, o.seed);
  problem.set_noise_sigma(0.05);
  const GridSummary grid = summarize_grid(problem, evaluation_points(1, GridSpec::default_for(1)));
  problem.set_crash_threshold(grid.threshold);
  const ParameterLabel label{"gain", 0.0, 10.0, "Nm/rad"};
  std::mt19937_64 rng(o.seed);

  Point x_a(1), x_b(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  do {
    x_a[0] = u(rng);
    x_b[0] = u(rng);
  } while (!problem.satisfied(x_a) && !problem.satisfied(x_b));
  const DuelFeedback first = simulate_dm(problem, x_a, x_b, rng);

  SessionManager sessions;
  const json created = sessions.create_session(
      {{"config", {{"dimension", 1}, {"budget", o.budget}, {"mode", "best"}, {"seed", o.seed}}},
       {"labels", json::array({{{"name", label.name}, {"lower", label.lower}, {"upper", label.upper}, {"unit", label.unit}}})},
       {"initial",
        {{"x_a", {label.to_native(x_a[0])}},
         {"x_b", {label.to_native(x_b[0])}},
         {"outcome", std::string(to_string(outcome_of(first)))}}}});
  const std::string id = created.at("id");
  std::cout << "session " << id << ": initial duel " << label.to_native(x_a[0]) << " vs " << label.to_native(x_b[0])
            << " -> " << to_string(outcome_of(first)) << "\n";
  if (o.interactive) std::cout << "answer with a, b, ca (crash A), cb (crash B), cc (both crashed), r (repeat), q\n";

  while (true) {
    json duel;
    try {
      duel = sessions.get_duel(id);
    } catch (const ServiceError& e) {
      if (e.code() == "session_finished") break;
      throw;
    }
    const double a = duel.at("x_a")[0], b = duel.at("x_b")[0];
    std::cout << "[" << duel.at("iteration") << "/" << duel.at("budget") << "] A: " << label.name << " = " << a
              << "   B: " << label.name << " = " << b << '\n';
    Outcome outcome;
    if (o.interactive) {
      std::string answer;
      std::cout << "> " << std::flush;
      if (!std::getline(std::cin, answer) || answer == "q") break;
      if (answer == "r") continue;
      static const std::map<std::string, Outcome> keys{{"a", Outcome::PreferA},
                                                       {"b", Outcome::PreferB},
                                                       {"ca", Outcome::CrashA},
                                                       {"cb", Outcome::CrashB},
                                                       {"cc", Outcome::CrashBoth}};
      auto it = keys.find(answer);
      if (it == keys.end()) {
        std::cout << "unrecognised answer\n";
        continue;
      }
      outcome = it->second;
    } else {
      Point pa(1), pb(1);
      pa[0] = label.to_unit(a);
      pb[0] = label.to_unit(b);
      outcome = outcome_of(simulate_dm(problem, pa, pb, rng));
      std::cout << "    oracle: " << to_string(outcome) << '\n';
    }
    try {
      const json r = sessions.submit_feedback(id, {{"duel_token", duel.at("duel_token")},
                                                   {"outcome", std::string(to_string(outcome))}});
      std::cout << "    added " << r.at("added") << " comparison(s)\n";
    } catch (const ServiceError& e) {
      std::cout << "    rejected (" << e.code() << "): " << e.what() << '\n';
      if (!o.interactive) throw;
    }
  }

  const json history = sessions.get_history(id);
  const json& entries = history.at("entries");
  const json& incumbent = entries.empty() ? history.at("initial").at("incumbent") : entries.back().at("incumbent");
  std::cout << "crashes recorded: " << history.at("crashed").size() << '\n';
  if (!incumbent.is_null()) {
    Point x(1);
    x[0] = label.to_unit(incumbent.at("x")[0].get<double>());
    std::cout << "incumbent: " << label.name << " = " << incumbent.at("x")[0].get<double>()
              << "  normalized performance " << normalized_performance(problem(x), grid) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preferential Bayesian optimization with crash feedback"};
  app.require_subcommand(1);

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run a synthetic benchmark and export the results");
  bench_cmd->add_option("config", bench.config, "Benchmark config (JSON)")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("-o,--out", bench.out, "Output file")->required();
  bench_cmd->add_option("--format", bench.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  bench_cmd->add_option("-j,--parallel", bench.parallel, "Worker threads")->check(CLI::Range(1u, 1024u));
  bench_cmd->add_option("--seed", bench.seed, "Override the config seed");

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Host the session service over HTTP");
  serve_cmd->add_option("--addr", serve.addr, "host:port (default PREFOPT_BIND or 127.0.0.1:8080)");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Session directory (default PREFOPT_DATA_DIR)");

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "Verify that an exported session replays to its dataset");
  replay_cmd->add_option("export", replay_path, "Session export or state document")
      ->required()
      ->check(CLI::ExistingFile);

  DemoOptions demo;
  auto* demo_cmd = app.add_subcommand("demo", "One-dimensional session against a simulated decision maker");
  demo_cmd->add_option("--budget", demo.budget, "Number of duels after the initial one")->check(CLI::Range(1, 500));
  demo_cmd->add_option("--seed", demo.seed, "Oracle and optimizer seed");
  demo_cmd->add_flag("-i,--interactive", demo.interactive, "Answer the duels yourself");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (app.got_subcommand(bench_cmd)) return run_bench(bench);
    if (app.got_subcommand(serve_cmd)) return run_serve(serve);
    if (app.got_subcommand(replay_cmd)) return run_replay(replay_path);
    if (app.got_subcommand(demo_cmd)) return run_demo(demo);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "prefopt: " << e.what() << '\n';
    return kUsageError;
  } catch (const Error& e) {
    std::cerr << "prefopt: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    std::cerr << "prefopt: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
