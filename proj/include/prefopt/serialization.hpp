#pragma once

// Canonical JSON encoding of optimizer state. Doubles are written with
// shortest round-trip precision, so decode(encode(x)) is bit-exact.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "prefopt/optimizer.hpp"

namespace prefopt {

inline constexpr int kStateSchemaVersion = 1;

nlohmann::json point_to_json(const Point& x);
Point point_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KernelConfig& k);
KernelConfig kernel_from_json(const nlohmann::json& j);

nlohmann::json to_json(const OptimizerConfig& c);
/// Missing keys take the defaults of OptimizerConfig; throws Schema on bad types.
OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DuelFeedback& f);
DuelFeedback feedback_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ComparisonDataset& d);
ComparisonDataset dataset_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FeedbackLedger& l);
FeedbackLedger ledger_from_json(const nlohmann::json& j);

nlohmann::json to_json(const HistoryEntry& h);
HistoryEntry history_entry_from_json(const nlohmann::json& j);

/// Full versioned state document.
nlohmann::json to_json(const Optimizer& opt);
Optimizer optimizer_from_json(const nlohmann::json& j);

std::string hash_hex(std::uint64_t h);

struct ReplayReport {
  bool match = false;
  std::string recorded_hash;
  std::string replayed_hash;
  std::size_t iterations = 0;
  bool ledger_match = false;
  std::string detail;  // empty on match
};

/// Re-folds the recorded feedback of a state document and compares dataset
/// hashes with the recorded dataset.
ReplayReport verify_replay(const nlohmann::json& state);

}  // namespace prefopt
