#pragma once

// One JSON document per session in a data directory. Writes go to a
// temporary file that is flushed to disk and renamed over the target, so a
// reader (or a restarted process) sees either the old or the new document.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace prefopt {

class SessionStore {
 public:
  /// Creates the directory if needed and removes temporary files left by an
  /// interrupted write.
  explicit SessionStore(std::filesystem::path directory);

  const std::filesystem::path& directory() const { return directory_; }

  void save(const std::string& id, const nlohmann::json& document) const;
  std::optional<nlohmann::json> load(const std::string& id) const;
  /// Session ids with a document on disk, sorted.
  std::vector<std::string> list() const;
  std::filesystem::path path_for(const std::string& id) const;

  /// Test hook invoked after the temporary file is complete and before the
  /// rename. Throwing from it emulates a process killed mid-write.
  using FaultHook = std::function<void(const std::filesystem::path& temporary)>;
  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

  static bool valid_id(const std::string& id);

 private:
  std::filesystem::path directory_;
  FaultHook fault_hook_;
};

}  // namespace prefopt
