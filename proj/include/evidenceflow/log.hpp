#pragma once

#include <mutex>
#include <ostream>
#include <string>
#include <string_view>

namespace evidenceflow {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Fatal = 4 };

LogLevel parse_log_level(std::string_view text);
std::string_view to_string(LogLevel level);

// One line per state transition: `ts level server_id job_id event`.
class Logger {
 public:
  explicit Logger(std::ostream& sink, LogLevel min_level = LogLevel::Info);

  void log(LogLevel level, std::string_view server_id, std::string_view job_id,
           std::string_view event);

  void set_level(LogLevel level) { min_level_ = level; }

  // Logger writing nowhere; the default for library calls without a sink.
  static Logger& null();

 private:
  std::ostream* sink_;
  LogLevel min_level_;
  std::mutex mu_;
};

}  // namespace evidenceflow
