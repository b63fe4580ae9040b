#include "evidenceflow/server_config.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evidenceflow/error.hpp"
#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/kvtext.hpp"

namespace evidenceflow {

std::string_view to_string(LockPolicy policy) {
  return policy == LockPolicy::Exclusive ? "exclusive" : "shared";
}

ServerConfig parse_server_config(std::string_view text) {
  const auto doc = parse_kv_document(text);
  if (!doc.sections.empty())
    throw ConfigError("server config does not use sections", doc.sections.front().line);

  ServerConfig cfg;
  bool have_id = false, have_root = false, have_runner = false;
  constexpr std::string_view kRunnerPrefix = "runner.";
  for (const auto& e : doc.root.entries) {
    if (e.key.rfind(kRunnerPrefix, 0) == 0) {
      const auto sub = e.key.substr(kRunnerPrefix.size());
      if (sub.empty()) throw ConfigError("empty runner setting name", e.line);
      if (!cfg.runner_settings.emplace(sub, e.value).second)
        throw ConfigError("duplicate key '" + e.key + "'", e.line);
      continue;
    }
    if (e.key == "server_id") {
      if (e.value.empty()) throw ConfigError("server_id is empty", e.line);
      cfg.server_id = e.value;
      have_id = true;
    } else if (e.key == "queue_root") {
      if (e.value.empty()) throw ConfigError("queue_root is empty", e.line);
      cfg.queue_root = e.value;
      have_root = true;
    } else if (e.key == "poll_interval") {
      double seconds = 0;
      try {
        std::size_t used = 0;
        seconds = std::stod(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("poll_interval is not a number of seconds", e.line);
      }
      if (!(seconds > 0) || !std::isfinite(seconds))
        throw ConfigError("poll_interval must be > 0", e.line);
      cfg.poll_interval = std::chrono::milliseconds(
          std::max<long long>(1, std::llround(seconds * 1000.0)));
    } else if (e.key == "runner") {
      cfg.runner = e.value;
      have_runner = !e.value.empty();
    } else if (e.key == "lock_policy") {
      if (e.value == "exclusive") cfg.lock_policy = LockPolicy::Exclusive;
      else if (e.value == "shared") cfg.lock_policy = LockPolicy::Shared;
      else throw ConfigError("lock_policy must be exclusive or shared", e.line);
    } else {
      throw ConfigError("unknown key '" + e.key + "'", e.line);
    }
  }
  if (!have_id) throw ConfigError("missing required key 'server_id'");
  if (!have_root) throw ConfigError("missing required key 'queue_root'");
  if (!have_runner) throw ConfigError("missing required key 'runner'");
  return cfg;
}

ServerConfig load_server_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_server_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace evidenceflow
