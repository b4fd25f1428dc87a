#include "prefopt/serialization.hpp"

#include <cstdio>

#include "prefopt/error.hpp"

namespace prefopt {

using nlohmann::json;

namespace {

template <typename F>
auto schema_guard(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed ") + what + ": " + e.what());
  }
}

json opt_point(const std::optional<Point>& p) { return p ? point_to_json(*p) : json(nullptr); }

std::optional<Point> opt_point_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return point_from_json(j);
}

std::string incumbent_rule_name(IncumbentRule r) { return r == IncumbentRule::DuelWins ? "duel_wins" : "posterior_mean"; }

IncumbentRule incumbent_rule_from(const std::string& s) {
  if (s == "posterior_mean") return IncumbentRule::PosteriorMean;
  if (s == "duel_wins") return IncumbentRule::DuelWins;
  fail(ErrorKind::Schema, "unknown incumbent rule '" + s + "'");
}

}  // namespace

json point_to_json(const Point& x) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) arr.push_back(x[i]);
  return arr;
}

Point point_from_json(const json& j) {
  return schema_guard("point", [&] {
    if (!j.is_array()) fail(ErrorKind::Schema, "a point must be an array of numbers");
    Point x(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) x[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
    return x;
  });
}

json to_json(const KernelConfig& k) {
  json ls = json::array();
  for (Eigen::Index i = 0; i < k.lengthscales.size(); ++i) ls.push_back(k.lengthscales[i]);
  return {{"lengthscales", ls}, {"signal_variance", k.signal_variance}};
}

KernelConfig kernel_from_json(const json& j) {
  return schema_guard("kernel", [&] {
    KernelConfig k;
    if (j.contains("lengthscales")) {
      const auto& ls = j.at("lengthscales");
      k.lengthscales.resize(static_cast<Eigen::Index>(ls.size()));
      for (std::size_t i = 0; i < ls.size(); ++i) k.lengthscales[static_cast<Eigen::Index>(i)] = ls.at(i).get<double>();
    } else if (j.contains("lengthscale")) {
      k.lengthscales = Eigen::VectorXd::Constant(1, j.at("lengthscale").get<double>());
    }
    k.signal_variance = j.value("signal_variance", k.signal_variance);
    return k;
  });
}

json to_json(const OptimizerConfig& c) {
  return {
      {"dimension", c.dimension},
      {"budget", c.budget},
      {"mode", std::string(to_string(c.mode))},
      {"kernel", to_json(c.kernel)},
      {"noise_sigma", c.noise.sigma},
      {"acquisition", {{"restarts", c.acquisition.restarts}, {"local_steps", c.acquisition.local_steps}}},
      {"seed", c.seed},
      {"crash_feedback", c.crash_feedback},
      {"lengthscale_search", c.lengthscale_search},
      {"incumbent_rule", incumbent_rule_name(c.incumbent_rule)},
  };
}

OptimizerConfig optimizer_config_from_json(const json& j) {
  return schema_guard("optimizer config", [&] {
    if (!j.is_object()) fail(ErrorKind::Schema, "optimizer config must be an object");
    OptimizerConfig c;
    c.dimension = j.value("dimension", c.dimension);
    c.budget = j.value("budget", c.budget);
    if (j.contains("mode")) c.mode = comparison_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"));
    c.noise.sigma = j.value("noise_sigma", c.noise.sigma);
    if (j.contains("acquisition")) {
      const auto& a = j.at("acquisition");
      c.acquisition.restarts = a.value("restarts", c.acquisition.restarts);
      c.acquisition.local_steps = a.value("local_steps", c.acquisition.local_steps);
    }
    c.seed = j.value("seed", c.seed);
    c.crash_feedback = j.value("crash_feedback", c.crash_feedback);
    c.lengthscale_search = j.value("lengthscale_search", c.lengthscale_search);
    if (j.contains("incumbent_rule")) c.incumbent_rule = incumbent_rule_from(j.at("incumbent_rule").get<std::string>());
    return c;
  });
}

json to_json(const DuelFeedback& f) {
  return {{"x_a", point_to_json(f.x_a)},
          {"x_b", point_to_json(f.x_b)},
          {"s_a", f.s_a ? 1 : 0},
          {"s_b", f.s_b ? 1 : 0},
          {"pi", f.pi ? json(static_cast<int>(*f.pi)) : json(nullptr)}};
}

DuelFeedback feedback_from_json(const json& j) {
  return schema_guard("feedback", [&] {
    DuelFeedback f;
    f.x_a = point_from_json(j.at("x_a"));
    f.x_b = point_from_json(j.at("x_b"));
    f.s_a = j.at("s_a").get<int>() != 0;
    f.s_b = j.at("s_b").get<int>() != 0;
    if (j.contains("pi") && !j.at("pi").is_null()) {
      const int pi = j.at("pi").get<int>();
      if (pi != 0 && pi != 1) fail(ErrorKind::Schema, "pi must be 0 or 1");
      f.pi = static_cast<Preference>(pi);
    }
    return f;
  });
}

json to_json(const ComparisonDataset& d) {
  json points = json::array();
  for (const auto& p : d.points()) points.push_back(point_to_json(p));
  json duels = json::array();
  for (const auto& duel : d.duels()) {
    duels.push_back({duel.first, duel.second, static_cast<int>(duel.pi), duel.is_virtual ? 1 : 0});
  }
  return {{"dimension", d.dimension()}, {"points", points}, {"duels", duels}};
}

ComparisonDataset dataset_from_json(const json& j) {
  return schema_guard("dataset", [&] {
    ComparisonDataset d(j.at("dimension").get<std::size_t>());
    std::vector<Point> points;
    for (const auto& p : j.at("points")) points.push_back(point_from_json(p));
    for (const auto& duel : j.at("duels")) {
      const auto a = duel.at(0).get<std::size_t>();
      const auto b = duel.at(1).get<std::size_t>();
      if (a >= points.size() || b >= points.size()) fail(ErrorKind::Schema, "duel references an unknown point");
      const int pi = duel.at(2).get<int>();
      if (pi != 0 && pi != 1) fail(ErrorKind::Schema, "pi must be 0 or 1");
      d.add(points[a], points[b], static_cast<Preference>(pi), duel.at(3).get<int>() != 0);
    }
    // Points that only appear through interning order must line up with the record.
    if (d.points().size() != points.size()) fail(ErrorKind::Schema, "dataset lists points that no duel uses");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!same_point(points[i], d.points()[i])) fail(ErrorKind::Schema, "dataset point order is not canonical");
    }
    return d;
  });
}

json to_json(const FeedbackLedger& l) {
  json feasible = json::array();
  for (const auto& p : l.feasible()) feasible.push_back(point_to_json(p));
  json crashed = json::array();
  for (const auto& p : l.crashed()) crashed.push_back(point_to_json(p));
  return {{"feasible", feasible}, {"crashed", crashed}};
}

FeedbackLedger ledger_from_json(const json& j) {
  return schema_guard("ledger", [&] {
    FeedbackLedger l;
    for (const auto& p : j.at("feasible")) l.add_feasible(point_from_json(p));
    for (const auto& p : j.at("crashed")) l.add_crashed(point_from_json(p));
    return l;
  });
}

json to_json(const HistoryEntry& h) {
  return {{"iteration", h.iteration},
          {"feedback", to_json(h.feedback)},
          {"added", h.added},
          {"incumbent", opt_point(h.incumbent)},
          {"ablation", h.ablation}};
}

HistoryEntry history_entry_from_json(const json& j) {
  return schema_guard("history entry", [&] {
    HistoryEntry h;
    h.iteration = j.at("iteration").get<std::size_t>();
    h.feedback = feedback_from_json(j.at("feedback"));
    h.added = j.at("added").get<std::size_t>();
    h.incumbent = opt_point_from(j.value("incumbent", json(nullptr)));
    h.ablation = j.value("ablation", false);
    return h;
  });
}

json to_json(const Optimizer& opt) {
  const OptimizerSnapshot s = opt.snapshot();
  json history = json::array();
  for (const auto& h : s.history) history.push_back(to_json(h));
  json pending = nullptr;
  if (s.pending) pending = {{"x_a", point_to_json(s.pending->first)}, {"x_b", point_to_json(s.pending->second)}};
  return {
      {"schema_version", kStateSchemaVersion},
      {"config", to_json(s.config)},
      {"initial", to_json(s.initial)},
      {"initial_added", s.initial_added},
      {"initial_incumbent", opt_point(s.initial_incumbent)},
      {"dataset", to_json(s.dataset)},
      {"dataset_hash", hash_hex(s.dataset.hash())},
      {"ledger", to_json(s.ledger)},
      {"pending", pending},
      {"iteration", s.iteration},
      {"history", history},
      {"last_evaluated", point_to_json(s.last_evaluated)},
  };
}

Optimizer optimizer_from_json(const json& j) {
  return schema_guard("optimizer state", [&] {
    if (!j.is_object() || !j.contains("schema_version")) fail(ErrorKind::Schema, "state document has no schema_version");
    const int version = j.at("schema_version").get<int>();
    if (version != kStateSchemaVersion) {
      fail(ErrorKind::Schema, "unsupported state schema version " + std::to_string(version) + " (expected " +
                                  std::to_string(kStateSchemaVersion) + ")");
    }
    OptimizerSnapshot s;
    s.config = optimizer_config_from_json(j.at("config"));
    s.initial = feedback_from_json(j.at("initial"));
    s.initial_added = j.at("initial_added").get<std::size_t>();
    s.initial_incumbent = opt_point_from(j.value("initial_incumbent", json(nullptr)));
    s.dataset = dataset_from_json(j.at("dataset"));
    s.ledger = ledger_from_json(j.at("ledger"));
    if (!j.at("pending").is_null()) {
      s.pending = std::make_pair(point_from_json(j.at("pending").at("x_a")), point_from_json(j.at("pending").at("x_b")));
    }
    s.iteration = j.at("iteration").get<std::size_t>();
    for (const auto& h : j.at("history")) s.history.push_back(history_entry_from_json(h));
    s.last_evaluated = point_from_json(j.at("last_evaluated"));
    return Optimizer::restore(std::move(s));
  });
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ReplayReport verify_replay(const json& state) {
  const Optimizer recorded = optimizer_from_json(state);
  ReplayReport r;
  r.recorded_hash = hash_hex(recorded.dataset().hash());
  r.iterations = recorded.history().size();
  if (state.contains("dataset_hash") && state.at("dataset_hash") != r.recorded_hash) {
    r.detail = "stored dataset_hash does not match the stored dataset";
  }
  try {
    const Optimizer replayed = Optimizer::replay(recorded.config(), recorded.initial(), recorded.history());
    r.replayed_hash = hash_hex(replayed.dataset().hash());
    r.ledger_match = recorded.ledger() == replayed.ledger();
  } catch (const Error& e) {
    r.detail = std::string("replay rejected the recorded feedback: ") + e.what();
    return r;
  }
  r.match = r.detail.empty() && r.recorded_hash == r.replayed_hash && r.ledger_match;
  if (!r.match && r.detail.empty()) r.detail = r.ledger_match ? "dataset hash differs" : "ledger differs";
  return r;
}

}  // namespace prefopt
