#pragma once

// Interactive optimization sessions for a human decision maker. Requests and
// responses are JSON documents; the HTTP layer only routes them.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefopt/error.hpp"
#include "prefopt/optimizer.hpp"
#include "prefopt/session_store.hpp"

namespace prefopt {

inline constexpr int kSessionSchemaVersion = 1;

/// Display name and native range of one parameter; [0,1] maps affinely onto [lower, upper].
struct ParameterLabel {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  std::string unit;

  double to_native(double u) const { return lower + u * (upper - lower); }
  double to_unit(double x) const { return (x - lower) / (upper - lower); }
};

Point to_native(const Point& u, const std::vector<ParameterLabel>& labels);
Point to_unit(const Point& x, const std::vector<ParameterLabel>& labels);

enum class Outcome { PreferA, PreferB, CrashA, CrashB, CrashBoth };

std::string_view to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);
DuelFeedback feedback_for(const Point& x_a, const Point& x_b, Outcome o);
/// Inverse of feedback_for; crash_both also covers a crash pair recorded with a preference.
Outcome outcome_of(const DuelFeedback& f);

enum class SessionStatus { AwaitingFeedback, ReadyToPropose, Finished };

std::string_view to_string(SessionStatus s);

/// Error raised by the service with a machine-readable code.
class ServiceError : public Error {
 public:
  ServiceError(ErrorKind kind, std::string code, const std::string& message)
      : Error(kind, message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Default machine-readable code and HTTP status for an error kind.
std::string error_code(const Error& e);
int http_status(const Error& e);

struct SessionRecord {
  std::string id;
  std::string created_at;  // UTC, ISO 8601
  std::vector<ParameterLabel> labels;
  Optimizer optimizer;

  SessionStatus status() const;
  /// Identifies the pending duel; empty when nothing is pending.
  std::string duel_token() const;
  nlohmann::json to_json() const;
  static SessionRecord from_json(const nlohmann::json& j);
};

class SessionManager {
 public:
  /// Without a data directory sessions live in memory only.
  explicit SessionManager(std::optional<std::filesystem::path> data_dir = std::nullopt);

  /// Body: {config, labels?, initial: {x_a, x_b, outcome}} with points in native units.
  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json get_duel(const std::string& id);
  /// Body: {duel_token, outcome}.
  nlohmann::json submit_feedback(const std::string& id, const nlohmann::json& body);
  nlohmann::json get_history(const std::string& id);
  /// Canonical session document (the persisted form).
  nlohmann::json export_session(const std::string& id);
  /// Registers an exported document after verifying that its history replays
  /// to the recorded dataset. Returns the session id.
  std::string import_session(const nlohmann::json& document);

  std::vector<std::string> session_ids() const;
  /// Rewrites every session document; used on shutdown.
  void persist_all();

  SessionStore* store() { return store_ ? &*store_ : nullptr; }

 private:
  struct Slot {
    explicit Slot(SessionRecord r) : record(std::move(r)) {}
    std::mutex mutex;
    SessionRecord record;
  };

  std::shared_ptr<Slot> find(const std::string& id) const;
  void persist(const SessionRecord& record) const;
  std::string new_id();

  std::optional<SessionStore> store_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::mutex id_mutex_;
};

}  // namespace prefopt
