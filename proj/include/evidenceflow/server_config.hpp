#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace evidenceflow {

enum class LockPolicy { Exclusive, Shared };

using RunnerSettings = std::map<std::string, std::string, std::less<>>;

struct ServerConfig {
  std::string server_id;
  std::filesystem::path queue_root;
  std::chrono::milliseconds poll_interval{5000};
  std::string runner;
  RunnerSettings runner_settings;  // `runner.<key>=<value>` lines
  LockPolicy lock_policy = LockPolicy::Exclusive;
};

// Same flat key=value format as job files; `#` comments allowed.
// Throws ConfigError with the line number on bad input.
ServerConfig parse_server_config(std::string_view text);
ServerConfig load_server_config(const std::filesystem::path& path);

std::string_view to_string(LockPolicy policy);

}  // namespace evidenceflow
