#include <doctest.h>

#include <random>

#include "prefopt/error.hpp"
#include "prefopt/optimizer.hpp"
#include "prefopt/serialization.hpp"
#include "prefopt/test_problems.hpp"

using namespace prefopt;

namespace {

struct Run {
  Optimizer opt;
  TestProblem problem;
};

TestProblem thresholded_sample(std::size_t dim, std::uint64_t seed) {
  TestProblem problem = make_gp_sample_path(dim, seed);
  problem.set_crash_threshold(compute_threshold(problem, GridSpec{20, 1024}));
  return problem;
}

DuelFeedback feasible_start(const TestProblem& problem, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(problem.dimension());
  Point a(d), b(d);
  do {
    for (Eigen::Index i = 0; i < d; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
    }
  } while (!problem.satisfied(a) && !problem.satisfied(b));
  return simulate_dm(problem, a, b, rng);
}

Run run_session(OptimizerConfig config, std::uint64_t oracle_seed, std::size_t steps) {
  TestProblem problem = thresholded_sample(config.dimension, oracle_seed);
  std::mt19937_64 rng(oracle_seed);
  Optimizer opt = Optimizer::create(config, feasible_start(problem, rng));
  for (std::size_t t = 0; t < steps && opt.iteration() < config.budget; ++t) {
    const auto [a, b] = opt.propose();
    opt.submit(simulate_dm(problem, a, b, rng));
  }
  return {std::move(opt), std::move(problem)};
}

OptimizerConfig small_config(ComparisonMode mode, std::size_t dim = 1, std::size_t budget = 6) {
  OptimizerConfig c;
  c.dimension = dim;
  c.budget = budget;
  c.mode = mode;
  c.seed = 17;
  c.acquisition.restarts = 8;
  c.acquisition.local_steps = 30;
  return c;
}

Point p1(double x) { return Point::Constant(1, x); }

}  // namespace

TEST_CASE("config validation") {
  OptimizerConfig c = small_config(ComparisonMode::TwoNew);
  CHECK_NOTHROW(c.validate());
  c.budget = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(ComparisonMode::TwoNew);
  c.dimension = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(ComparisonMode::TwoNew);
  c.noise.sigma = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("create rejects an uninformative first duel") {
  CHECK_THROWS_AS(
      Optimizer::create(small_config(ComparisonMode::TwoNew), DuelFeedback::make(p1(0.1), p1(0.2), false, false, {})),
      Error);
  CHECK_THROWS_AS(Optimizer::create(small_config(ComparisonMode::TwoNew),
                                    DuelFeedback::make(p1(0.1), p1(1.5), true, true, Preference::FirstPreferred)),
                  Error);
}

TEST_CASE("propose and submit state machine") {
  Optimizer opt = Optimizer::create(small_config(ComparisonMode::TwoNew, 1, 2),
                                    DuelFeedback::make(p1(0.2), p1(0.8), true, true, Preference::SecondPreferred));
  CHECK(opt.dataset().size() == 1);
  CHECK_THROWS_AS(opt.repeat_pending(), Error);
  CHECK_THROWS_AS(opt.submit(DuelFeedback::make(p1(0.2), p1(0.3), true, true, Preference::FirstPreferred)), Error);

  const auto duel = opt.propose();
  CHECK(in_unit_cube(duel.first));
  CHECK(in_unit_cube(duel.second));
  CHECK_THROWS_AS(opt.propose(), Error);
  CHECK(same_point(opt.repeat_pending().first, duel.first));

  try {
    opt.submit(DuelFeedback::make(p1(0.4), duel.second, true, true, Preference::FirstPreferred));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Input);
  }
  opt.submit(DuelFeedback::make(duel.first, duel.second, true, false, {}));
  CHECK(opt.iteration() == 1);
  CHECK(opt.history().size() == 1);
  CHECK(opt.history()[0].iteration == 1);
  CHECK_FALSE(opt.finished());

  const auto second = opt.propose();
  opt.submit(DuelFeedback::make(second.first, second.second, true, true, Preference::FirstPreferred));
  CHECK(opt.finished());
  try {
    opt.propose();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::State);
  }
}

TEST_CASE("identical seeds give identical proposals") {
  const auto initial = DuelFeedback::make(p1(0.25), p1(0.6), true, true, Preference::FirstPreferred);
  Optimizer a = Optimizer::create(small_config(ComparisonMode::TwoNew), initial);
  Optimizer b = Optimizer::create(small_config(ComparisonMode::TwoNew), initial);
  const auto da = a.propose(), db = b.propose();
  CHECK(same_point(da.first, db.first));
  CHECK(same_point(da.second, db.second));
  CHECK(iteration_seed(17, 1) != iteration_seed(17, 2));
  CHECK(iteration_seed(17, 1) != iteration_seed(18, 1));
}

TEST_CASE("anchored modes duel against the incumbent or the last point") {
  Run best = run_session(small_config(ComparisonMode::CompareToBest), 3, 3);
  const auto incumbent = best.opt.incumbent();
  REQUIRE(incumbent.has_value());
  CHECK(same_point(best.opt.propose().second, *incumbent));

  Run last = run_session(small_config(ComparisonMode::CompareToLast), 3, 3);
  const Point previous_a = last.opt.history().back().feedback.x_a;
  CHECK(same_point(last.opt.last_evaluated(), previous_a));
  CHECK(same_point(last.opt.propose().second, previous_a));
}

TEST_CASE("each submit grows the dataset by the reported delta and keeps the incumbent feasible") {
  for (const auto mode : {ComparisonMode::TwoNew, ComparisonMode::CompareToBest, ComparisonMode::CompareToLast}) {
    CAPTURE(to_string(mode));
    Run run = run_session(small_config(mode, 2, 8), 11, 8);
    std::size_t total = run.opt.snapshot().initial_added;
    for (const auto& h : run.opt.history()) {
      total += h.added;
      REQUIRE(h.incumbent.has_value());
      CHECK(std::any_of(run.opt.ledger().feasible().begin(), run.opt.ledger().feasible().end(),
                        [&](const Point& s) { return same_point(s, *h.incumbent); }));
    }
    CHECK(run.opt.dataset().size() == total);
    CHECK(run.opt.finished());
    CHECK(run.opt.history().size() == 8);
    // no recorded duel ranks a crashed point over a feasible one
    for (const auto& d : run.opt.dataset().duels()) {
      const Point& w = run.opt.dataset().points()[d.winner()];
      const Point& l = run.opt.dataset().points()[d.loser()];
      CHECK_FALSE((run.opt.ledger().is_crashed(w) && run.opt.ledger().is_feasible(l)));
    }
  }
}

TEST_CASE("ablation never adds virtual duels") {
  OptimizerConfig c = small_config(ComparisonMode::TwoNew, 2, 8);
  c.crash_feedback = false;
  Run run = run_session(c, 5, 8);
  for (const auto& d : run.opt.dataset().duels()) CHECK_FALSE(d.is_virtual);
  for (const auto& h : run.opt.history()) {
    CHECK(h.added <= 1);
    CHECK(h.ablation == !h.feedback.both_feasible());
  }
}

TEST_CASE("fallback proposals only kick in when fitting fails") {
  Optimizer opt = Optimizer::create(small_config(ComparisonMode::CompareToBest),
                                    DuelFeedback::make(p1(0.2), p1(0.8), true, true, Preference::SecondPreferred));
  std::mt19937_64 rng(1);
  const ExploreResult r = propose_or_explore(opt, rng);
  CHECK_FALSE(r.fell_back);
  CHECK(opt.pending().has_value());

  Optimizer manual = Optimizer::create(small_config(ComparisonMode::TwoNew),
                                       DuelFeedback::make(p1(0.2), p1(0.8), true, true, Preference::SecondPreferred));
  const auto d = manual.propose_explicit(p1(0.3), p1(0.9));
  CHECK(same_point(d.first, p1(0.3)));
  CHECK_THROWS_AS(manual.propose_explicit(p1(0.3), p1(0.9)), Error);
}

TEST_CASE("state documents round-trip and replay bit-exactly on random sessions") {
  std::mt19937_64 rng(2024);
  const ComparisonMode modes[] = {ComparisonMode::TwoNew, ComparisonMode::CompareToBest,
                                  ComparisonMode::CompareToLast};
  for (int session = 0; session < 20; ++session) {
    OptimizerConfig c = small_config(modes[session % 3], 1 + static_cast<std::size_t>(session % 3), 5);
    c.seed = rng();
    c.crash_feedback = session % 5 != 4;
    c.lengthscale_search = session % 7 == 0;
    Run run = run_session(c, rng() % 1000, 1 + static_cast<std::size_t>(session % 5));
    if (session % 2 == 0 && !run.opt.finished()) run.opt.propose();  // leave a duel pending

    CAPTURE(session);
    const nlohmann::json doc = to_json(run.opt);
    const Optimizer restored = optimizer_from_json(doc);
    CHECK(restored.dataset().hash() == run.opt.dataset().hash());
    CHECK(restored.ledger() == run.opt.ledger());
    CHECK(to_json(restored).dump() == doc.dump());

    const ReplayReport report = verify_replay(doc);
    CHECK(report.match);
    CHECK(report.recorded_hash == report.replayed_hash);
    CHECK(report.iterations == run.opt.history().size());

    const Optimizer replayed = Optimizer::replay(c, run.opt.initial(), run.opt.history());
    CHECK(replayed.dataset().hash() == run.opt.dataset().hash());
  }
}

TEST_CASE("replay detects a tampered preference") {
  Run run = run_session(small_config(ComparisonMode::TwoNew, 1, 6), 8, 6);
  nlohmann::json doc = to_json(run.opt);
  bool flipped = false;
  for (auto& entry : doc.at("history")) {
    auto& fb = entry.at("feedback");
    if (fb.contains("pi") && !fb.at("pi").is_null()) {
      fb["pi"] = fb.at("pi").get<int>() == 0 ? 1 : 0;
      flipped = true;
      break;
    }
  }
  REQUIRE(flipped);
  const ReplayReport report = verify_replay(doc);
  CHECK_FALSE(report.match);
  CHECK_FALSE(report.detail.empty());
}
