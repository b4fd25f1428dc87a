#include "prefopt/session_service.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <iostream>
#include <random>

#include "prefopt/serialization.hpp"

namespace prefopt {

using nlohmann::json;

namespace {

constexpr std::uint64_t kProposalStream = 0x5e55'10f0'2d0e'c0deULL;

[[noreturn]] void raise(ErrorKind kind, const std::string& code, const std::string& message) {
  throw ServiceError(kind, code, message);
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json native_json(const Point& u, const std::vector<ParameterLabel>& labels) {
  return point_to_json(to_native(u, labels));
}

json incumbent_json(const std::optional<Point>& x, const std::vector<ParameterLabel>& labels) {
  if (!x) return nullptr;
  return {{"x", native_json(*x, labels)}, {"x_unit", point_to_json(*x)}};
}

json label_to_json(const ParameterLabel& l) {
  return {{"name", l.name}, {"lower", l.lower}, {"upper", l.upper}, {"unit", l.unit}};
}

ParameterLabel label_from_json(const json& j) {
  ParameterLabel l;
  l.name = j.at("name").get<std::string>();
  l.lower = j.at("lower").get<double>();
  l.upper = j.at("upper").get<double>();
  l.unit = j.value("unit", std::string{});
  if (!std::isfinite(l.lower) || !std::isfinite(l.upper) || !(l.lower < l.upper)) {
    raise(ErrorKind::Input, "invalid_config", "label '" + l.name + "' needs finite bounds with lower < upper");
  }
  return l;
}

std::vector<ParameterLabel> default_labels(std::size_t d) {
  std::vector<ParameterLabel> labels;
  for (std::size_t i = 0; i < d; ++i) labels.push_back({"x" + std::to_string(i + 1), 0.0, 1.0, ""});
  return labels;
}

// Proposals are not part of the replayed trace, so any deterministic stream will do.
void propose_next(SessionRecord& rec) {
  const Optimizer& opt = rec.optimizer;
  if (opt.pending() || opt.iteration() >= opt.config().budget) return;
  std::mt19937_64 rng(iteration_seed(opt.config().seed ^ kProposalStream, opt.iteration() + 1));
  propose_or_explore(rec.optimizer, rng);
}

json duel_json(const SessionRecord& rec) {
  const Optimizer& opt = rec.optimizer;
  const auto& [a, b] = *opt.pending();
  return {{"id", rec.id},
          {"status", std::string(to_string(rec.status()))},
          {"duel_token", rec.duel_token()},
          {"iteration", opt.iteration() + 1},
          {"budget", opt.config().budget},
          {"mode", std::string(to_string(opt.config().mode))},
          {"x_a", native_json(a, rec.labels)},
          {"x_b", native_json(b, rec.labels)},
          {"labels", [&] {
             json ls = json::array();
             for (const auto& l : rec.labels) ls.push_back(label_to_json(l));
             return ls;
           }()},
          {"incumbent", incumbent_json(opt.incumbent(), rec.labels)}};
}

json trace_entry(const DuelFeedback& f, std::size_t added, const std::optional<Point>& incumbent,
                 const std::vector<ParameterLabel>& labels) {
  return {{"x_a", native_json(f.x_a, labels)},
          {"x_b", native_json(f.x_b, labels)},
          {"outcome", std::string(to_string(outcome_of(f)))},
          {"added", added},
          {"incumbent", incumbent_json(incumbent, labels)}};
}

}  // namespace

Point to_native(const Point& u, const std::vector<ParameterLabel>& labels) {
  if (static_cast<std::size_t>(u.size()) != labels.size()) fail(ErrorKind::Input, "label count does not match point");
  Point x(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) x[i] = labels[static_cast<std::size_t>(i)].to_native(u[i]);
  return x;
}

Point to_unit(const Point& x, const std::vector<ParameterLabel>& labels) {
  if (static_cast<std::size_t>(x.size()) != labels.size()) fail(ErrorKind::Input, "label count does not match point");
  Point u(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) u[i] = labels[static_cast<std::size_t>(i)].to_unit(x[i]);
  return u;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::PreferA: return "prefer_a";
    case Outcome::PreferB: return "prefer_b";
    case Outcome::CrashA: return "crash_a";
    case Outcome::CrashB: return "crash_b";
    case Outcome::CrashBoth: return "crash_both";
  }
  return "?";
}

Outcome outcome_from_string(std::string_view s) {
  if (s == "prefer_a") return Outcome::PreferA;
  if (s == "prefer_b") return Outcome::PreferB;
  if (s == "crash_a") return Outcome::CrashA;
  if (s == "crash_b") return Outcome::CrashB;
  if (s == "crash_both") return Outcome::CrashBoth;
  raise(ErrorKind::Input, "invalid_outcome",
        "outcome must be one of prefer_a, prefer_b, crash_a, crash_b, crash_both");
}

DuelFeedback feedback_for(const Point& x_a, const Point& x_b, Outcome o) {
  switch (o) {
    case Outcome::PreferA: return DuelFeedback::make(x_a, x_b, true, true, Preference::FirstPreferred);
    case Outcome::PreferB: return DuelFeedback::make(x_a, x_b, true, true, Preference::SecondPreferred);
    case Outcome::CrashA: return DuelFeedback::make(x_a, x_b, false, true, std::nullopt);
    case Outcome::CrashB: return DuelFeedback::make(x_a, x_b, true, false, std::nullopt);
    case Outcome::CrashBoth: return DuelFeedback::make(x_a, x_b, false, false, std::nullopt);
  }
  fail(ErrorKind::Input, "unknown outcome");
}

Outcome outcome_of(const DuelFeedback& f) {
  if (!f.s_a && !f.s_b) return Outcome::CrashBoth;
  if (!f.s_a) return Outcome::CrashA;
  if (!f.s_b) return Outcome::CrashB;
  return f.pi == Preference::SecondPreferred ? Outcome::PreferB : Outcome::PreferA;
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingFeedback: return "awaiting_feedback";
    case SessionStatus::ReadyToPropose: return "ready_to_propose";
    case SessionStatus::Finished: return "finished";
  }
  return "?";
}

std::string error_code(const Error& e) {
  if (const auto* se = dynamic_cast<const ServiceError*>(&e)) return se->code();
  switch (e.kind()) {
    case ErrorKind::Input: return "invalid_request";
    case ErrorKind::State: return "conflict";
    case ErrorKind::Fit:
    case ErrorKind::Numerical: return "model_failure";
    case ErrorKind::Consistency: return "inconsistent_feedback";
    case ErrorKind::Initialization: return "assumption1_violated";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Schema: return "schema_mismatch";
    case ErrorKind::Io: return "io_error";
  }
  return "internal_error";
}

int http_status(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Input:
    case ErrorKind::Schema: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::State:
    case ErrorKind::Conflict:
    case ErrorKind::Consistency: return 409;
    case ErrorKind::Initialization: return 422;
    default: return 500;
  }
}

SessionStatus SessionRecord::status() const {
  if (optimizer.pending()) return SessionStatus::AwaitingFeedback;
  if (optimizer.iteration() >= optimizer.config().budget) return SessionStatus::Finished;
  return SessionStatus::ReadyToPropose;
}

std::string SessionRecord::duel_token() const {
  const auto& pending = optimizer.pending();
  if (!pending) return {};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (char c : id) feed(static_cast<unsigned char>(c));
  feed(optimizer.iteration());
  for (const Point* p : {&pending->first, &pending->second}) {
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &(*p)[i], sizeof bits);
      feed(bits);
    }
  }
  return std::to_string(optimizer.iteration() + 1) + "-" + hash_hex(h);
}

json SessionRecord::to_json() const {
  json labels_json = json::array();
  for (const auto& l : labels) labels_json.push_back(label_to_json(l));
  return {{"schema_version", kSessionSchemaVersion},
          {"id", id},
          {"created_at", created_at},
          {"labels", labels_json},
          {"state", prefopt::to_json(optimizer)}};
}

SessionRecord SessionRecord::from_json(const json& j) {
  try {
    if (!j.is_object() || !j.contains("schema_version")) {
      raise(ErrorKind::Schema, "schema_mismatch", "session document has no schema_version");
    }
    const int version = j.at("schema_version").get<int>();
    if (version != kSessionSchemaVersion) {
      raise(ErrorKind::Schema, "schema_mismatch",
            "unsupported session schema version " + std::to_string(version) + " (expected " +
                std::to_string(kSessionSchemaVersion) + ")");
    }
    SessionRecord rec{j.at("id").get<std::string>(), j.at("created_at").get<std::string>(), {},
                      optimizer_from_json(j.at("state"))};
    if (!SessionStore::valid_id(rec.id)) raise(ErrorKind::Schema, "schema_mismatch", "invalid session id");
    for (const auto& l : j.at("labels")) rec.labels.push_back(label_from_json(l));
    if (rec.labels.size() != rec.optimizer.config().dimension) {
      raise(ErrorKind::Schema, "schema_mismatch", "label count does not match the dimension");
    }
    return rec;
  } catch (const json::exception& e) {
    raise(ErrorKind::Schema, "schema_mismatch", std::string("malformed session document: ") + e.what());
  }
}

SessionManager::SessionManager(std::optional<std::filesystem::path> data_dir) {
  if (!data_dir) return;
  store_.emplace(*data_dir);
  for (const auto& id : store_->list()) {
    try {
      auto doc = store_->load(id);
      if (!doc) continue;
      SessionRecord rec = SessionRecord::from_json(*doc);
      if (rec.id != id) fail(ErrorKind::Schema, "document id does not match its file name");
      sessions_.emplace(id, std::make_shared<Slot>(std::move(rec)));
    } catch (const std::exception& e) {
      std::cerr << "prefopt: skipping session " << id << ": " << e.what() << '\n';
    }
  }
}

std::shared_ptr<SessionManager::Slot> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) raise(ErrorKind::NotFound, "not_found", "no session with id '" + id + "'");
  return it->second;
}

void SessionManager::persist(const SessionRecord& record) const {
  if (store_) store_->save(record.id, record.to_json());
}

std::string SessionManager::new_id() {
  std::lock_guard lock(id_mutex_);
  static thread_local std::random_device rd;
  for (;;) {
    const std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    const std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    std::string id = hash_hex(hi) + hash_hex(lo);
    std::shared_lock read(sessions_mutex_);
    if (!sessions_.count(id)) return id;
  }
}

json SessionManager::create_session(const json& body) {
  if (!body.is_object()) raise(ErrorKind::Input, "invalid_config", "request body must be a JSON object");
  if (body.contains("schema_version") && body.at("schema_version") != kSessionSchemaVersion) {
    raise(ErrorKind::Schema, "schema_mismatch", "unsupported schema_version");
  }
  if (!body.contains("config")) raise(ErrorKind::Input, "invalid_config", "missing 'config'");
  if (!body.contains("initial")) raise(ErrorKind::Input, "invalid_config", "missing 'initial' feedback");

  OptimizerConfig config;
  std::vector<ParameterLabel> labels;
  Point x_a, x_b;
  Outcome outcome;
  try {
    config = optimizer_config_from_json(body.at("config"));
    config.validate();
    if (body.contains("labels") && !body.at("labels").is_null()) {
      for (const auto& l : body.at("labels")) labels.push_back(label_from_json(l));
      if (labels.size() != config.dimension) {
        raise(ErrorKind::Input, "invalid_config", "need one label per dimension");
      }
    } else {
      labels = default_labels(config.dimension);
    }
    const json& init = body.at("initial");
    x_a = to_unit(point_from_json(init.at("x_a")), labels);
    x_b = to_unit(point_from_json(init.at("x_b")), labels);
    outcome = outcome_from_string(init.at("outcome").get<std::string>());
  } catch (const ServiceError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Schema || e.kind() == ErrorKind::Input) raise(e.kind(), "invalid_config", e.what());
    throw;
  } catch (const json::exception& e) {
    raise(ErrorKind::Input, "invalid_config", std::string("malformed request: ") + e.what());
  }
  if (!in_unit_cube(x_a) || !in_unit_cube(x_b)) {
    raise(ErrorKind::Input, "invalid_config", "initial points must lie inside the labelled ranges");
  }
  if (same_point(x_a, x_b)) raise(ErrorKind::Input, "invalid_config", "initial points must differ");

  std::optional<Optimizer> opt;
  try {
    opt.emplace(Optimizer::create(config, feedback_for(x_a, x_b, outcome)));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Initialization) {
      raise(ErrorKind::Initialization, "assumption1_violated",
            "the initial comparison needs at least one parameter vector that did not crash; "
            "start from a pair that includes a known safe configuration");
    }
    if (e.kind() == ErrorKind::Input) raise(ErrorKind::Input, "invalid_config", e.what());
    throw;
  }

  SessionRecord rec{new_id(), utc_now(), std::move(labels), std::move(*opt)};
  propose_next(rec);
  persist(rec);
  json response = {{"id", rec.id},
                   {"status", std::string(to_string(rec.status()))},
                   {"created_at", rec.created_at},
                   {"added", rec.optimizer.dataset().size()}};
  if (rec.optimizer.pending()) response["duel"] = duel_json(rec);
  {
    std::string id = rec.id;
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(std::move(id), std::make_shared<Slot>(std::move(rec)));
  }
  return response;
}

json SessionManager::get_duel(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  SessionRecord& rec = slot->record;
  if (rec.status() == SessionStatus::Finished) {
    raise(ErrorKind::Conflict, "session_finished", "the session has used its whole budget");
  }
  if (rec.status() == SessionStatus::ReadyToPropose) {
    SessionRecord next = rec;
    propose_next(next);
    persist(next);
    rec = std::move(next);
  }
  return duel_json(rec);
}

json SessionManager::submit_feedback(const std::string& id, const json& body) {
  if (!body.is_object() || !body.contains("duel_token") || !body.contains("outcome") ||
      !body.at("duel_token").is_string() || !body.at("outcome").is_string()) {
    raise(ErrorKind::Input, "invalid_request", "body must contain string fields 'duel_token' and 'outcome'");
  }
  const Outcome outcome = outcome_from_string(body.at("outcome").get<std::string>());
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  const SessionRecord& current = slot->record;
  if (current.status() == SessionStatus::Finished) {
    raise(ErrorKind::Conflict, "session_finished", "the session has used its whole budget");
  }
  if (!current.optimizer.pending() || body.at("duel_token").get<std::string>() != current.duel_token()) {
    raise(ErrorKind::Conflict, "stale_token", "the duel token does not match the pending duel; fetch the current duel");
  }

  SessionRecord next = current;
  const auto [a, b] = *next.optimizer.pending();
  try {
    next.optimizer.submit(feedback_for(a, b, outcome));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Initialization) {
      raise(ErrorKind::Initialization, "assumption1_violated",
            std::string(e.what()) + "; report a preference or a single crash instead");
    }
    if (e.kind() == ErrorKind::Consistency) {
      raise(ErrorKind::Consistency, "inconsistent_feedback",
            std::string(e.what()) + "; repeat the trial and report the outcome again");
    }
    throw;
  }
  propose_next(next);
  persist(next);
  slot->record = std::move(next);

  const SessionRecord& rec = slot->record;
  json response = {{"id", rec.id},
                   {"status", std::string(to_string(rec.status()))},
                   {"added", rec.optimizer.history().back().added},
                   {"iteration", rec.optimizer.iteration()},
                   {"incumbent", incumbent_json(rec.optimizer.incumbent(), rec.labels)}};
  if (rec.optimizer.pending()) response["duel"] = duel_json(rec);
  return response;
}

json SessionManager::get_history(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  const SessionRecord& rec = slot->record;
  const Optimizer& opt = rec.optimizer;
  json entries = json::array();
  for (const auto& h : opt.history()) {
    json e = trace_entry(h.feedback, h.added, h.incumbent, rec.labels);
    e["iteration"] = h.iteration;
    entries.push_back(std::move(e));
  }
  json crashed = json::array(), feasible = json::array();
  for (const auto& x : opt.ledger().crashed()) crashed.push_back(native_json(x, rec.labels));
  for (const auto& x : opt.ledger().feasible()) feasible.push_back(native_json(x, rec.labels));
  return {{"id", rec.id},
          {"status", std::string(to_string(rec.status()))},
          {"budget", opt.config().budget},
          {"initial", trace_entry(opt.initial(), opt.snapshot().initial_added, opt.snapshot().initial_incumbent,
                                  rec.labels)},
          {"entries", entries},
          {"crashed", crashed},
          {"feasible", feasible},
          {"dataset_size", opt.dataset().size()},
          {"dataset_hash", hash_hex(opt.dataset().hash())}};
}

json SessionManager::export_session(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return slot->record.to_json();
}

std::string SessionManager::import_session(const json& document) {
  SessionRecord rec = SessionRecord::from_json(document);
  const ReplayReport report = verify_replay(document.at("state"));
  if (!report.match) raise(ErrorKind::Input, "replay_mismatch", "document does not replay: " + report.detail);
  std::unique_lock lock(sessions_mutex_);
  if (sessions_.count(rec.id)) raise(ErrorKind::Conflict, "conflict", "a session with id '" + rec.id + "' exists");
  persist(rec);
  const std::string id = rec.id;
  sessions_.emplace(id, std::make_shared<Slot>(std::move(rec)));
  return id;
}

std::vector<std::string> SessionManager::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, slot] : sessions_) ids.push_back(id);
  return ids;
}

void SessionManager::persist_all() {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, slot] : sessions_) slots.push_back(slot);
  }
  for (const auto& slot : slots) {
    std::lock_guard lock(slot->mutex);
    persist(slot->record);
  }
}

}  // namespace prefopt
