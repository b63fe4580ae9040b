#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evidenceflow/error.hpp"
#include "evidenceflow/timeutil.hpp"

namespace evidenceflow {

// One unit of work. The folder its job file sits in is its state.
struct JobSpec {
  std::string job_id;
  std::string tool;
  std::filesystem::path source;
  std::filesystem::path source_root;
  std::filesystem::path output;
  std::string case_id;
  std::string evidence_name;
  std::string requested_by;
  UtcTime created_utc{};
  std::uint64_t seq = 0;
  std::vector<std::pair<std::string, std::string>> params;

  bool operator==(const JobSpec&) const = default;
};

inline constexpr int kJobFileVersion = 1;
// Largest seq that still fits the 8-digit filename field.
inline constexpr std::uint64_t kMaxSeq = 99'999'999;

class InvalidJob : public Error {
 public:
  using Error::Error;
};

// Throws InvalidJob when a field would not survive the on-disk format.
void validate_job(const JobSpec& job);

class JobFileError : public Error {
 public:
  enum class Kind { MissingKey, BadVersion, MalformedLine };

  static JobFileError missing_key(std::string key);
  static JobFileError bad_version(std::string found);
  static JobFileError malformed_line(std::size_t line_no, std::string why);

  Kind kind() const noexcept { return kind_; }
  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  JobFileError(Kind kind, std::string message, std::string key, std::size_t line);
  Kind kind_;
  std::string key_;
  std::size_t line_;
};

std::string render_job_file(const JobSpec& job);
JobSpec parse_job_file(std::string_view text);

// `<YYYYMMDDThhmmssZ>_<seq:08>_<job_id>.job`
std::string job_filename(const JobSpec& job);

// Random 16-hex-digit identifier.
std::string make_job_id();

}  // namespace evidenceflow
