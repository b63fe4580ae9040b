#include "evidenceflow/error.hpp"

namespace evidenceflow {

namespace {
std::string with_line(const std::string& message, std::size_t line) {
  if (line == 0) return message;
  return "line " + std::to_string(line) + ": " + message;
}
}  // namespace

ConfigError::ConfigError(const std::string& message, std::size_t line)
    : Error(with_line(message, line)), line_(line) {}

IoError::IoError(const std::string& what, const std::filesystem::path& path)
    : Error(what + ": " + path.string()), path_(path) {}

}  // namespace evidenceflow
