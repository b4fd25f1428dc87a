#include "prefopt/session_store.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "prefopt/error.hpp"

namespace prefopt {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSuffix = ".json";
constexpr const char* kTempSuffix = ".json.tmp";

void write_fully(int fd, const std::string& data, const fs::path& path) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) fail(ErrorKind::Io, "write failed for " + path.string());
    off += static_cast<std::size_t>(n);
  }
}

void sync_directory(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

SessionStore::SessionStore(fs::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  fs::create_directories(directory_, ec);
  if (ec || !fs::is_directory(directory_)) fail(ErrorKind::Io, "cannot create data directory " + directory_.string());
  for (const auto& entry : fs::directory_iterator(directory_)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > std::strlen(kTempSuffix) && name.ends_with(kTempSuffix)) fs::remove(entry.path(), ec);
  }
}

bool SessionStore::valid_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

fs::path SessionStore::path_for(const std::string& id) const {
  if (!valid_id(id)) fail(ErrorKind::Input, "invalid session id");
  return directory_ / (id + kSuffix);
}

void SessionStore::save(const std::string& id, const nlohmann::json& document) const {
  const fs::path target = path_for(id);
  const fs::path temporary = directory_ / (id + kTempSuffix);
  const std::string data = document.dump(2) + "\n";

  const int fd = ::open(temporary.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorKind::Io, "cannot open " + temporary.string());
  try {
    write_fully(fd, data, temporary);
    if (::fsync(fd) != 0) fail(ErrorKind::Io, "fsync failed for " + temporary.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);

  if (fault_hook_) fault_hook_(temporary);

  std::error_code ec;
  fs::rename(temporary, target, ec);
  if (ec) {
    fs::remove(temporary, ec);
    fail(ErrorKind::Io, "cannot rename " + temporary.string() + " to " + target.string());
  }
  sync_directory(directory_);
}

std::optional<nlohmann::json> SessionStore::load(const std::string& id) const {
  const fs::path path = path_for(id);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, "corrupt session document " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(directory_)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (!name.ends_with(kSuffix) || name.ends_with(kTempSuffix)) continue;
    std::string id = name.substr(0, name.size() - std::strlen(kSuffix));
    if (valid_id(id)) ids.push_back(std::move(id));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace prefopt
