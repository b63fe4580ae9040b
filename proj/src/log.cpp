#include "evidenceflow/log.hpp"

#include <sstream>

#include "evidenceflow/error.hpp"
#include "evidenceflow/timeutil.hpp"

namespace evidenceflow {

LogLevel parse_log_level(std::string_view text) {
  if (text == "debug") return LogLevel::Debug;
  if (text == "info") return LogLevel::Info;
  if (text == "warn" || text == "warning") return LogLevel::Warn;
  if (text == "error") return LogLevel::Error;
  if (text == "fatal") return LogLevel::Fatal;
  throw ConfigError("unknown log level '" + std::string(text) + "'");
}

std::string_view to_string(LogLevel level) {
  switch (level) {
    case LogLevel::Debug: return "DEBUG";
    case LogLevel::Info: return "INFO";
    case LogLevel::Warn: return "WARN";
    case LogLevel::Error: return "ERROR";
    case LogLevel::Fatal: return "FATAL";
  }
  return "?";
}

Logger::Logger(std::ostream& sink, LogLevel min_level)
    : sink_(&sink), min_level_(min_level) {}

void Logger::log(LogLevel level, std::string_view server_id,
                 std::string_view job_id, std::string_view event) {
  if (level < min_level_ || sink_ == nullptr) return;
  std::ostringstream line;
  line << format_iso_utc(now_utc()) << ' ' << to_string(level) << ' '
       << (server_id.empty() ? "-" : server_id) << ' '
       << (job_id.empty() ? "-" : job_id) << ' ' << event << '\n';
  std::lock_guard lock(mu_);
  *sink_ << line.str() << std::flush;
}

Logger& Logger::null() {
  static std::ostream discard(nullptr);
  static Logger logger(discard, LogLevel::Fatal);
  return logger;
}

}  // namespace evidenceflow
