#include "evidenceflow/job.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <random>

namespace evidenceflow {

namespace {

constexpr std::array<std::string_view, 11> kKeyOrder = {
    "version", "job_id", "tool", "source", "source_root", "output",
    "case_id", "evidence_name", "requested_by", "created_utc", "seq"};

constexpr std::string_view kParamPrefix = "param.";

bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
}

bool is_token(std::string_view s) {
  if (s.empty() || s.front() == '.') return false;
  for (char c : s)
    if (!is_token_char(c)) return false;
  return true;
}

bool has_line_break(std::string_view s) {
  return s.find_first_of("\r\n") != std::string_view::npos;
}

void check_single_line(std::string_view field, std::string_view value) {
  if (has_line_break(value))
    throw InvalidJob(std::string(field) + " contains a line break");
}

}  // namespace

void validate_job(const JobSpec& job) {
  if (!is_token(job.job_id))
    throw InvalidJob("job_id must be a non-empty token of [A-Za-z0-9_.-]");
  if (!is_token(job.tool))
    throw InvalidJob("tool must be a non-empty token of [A-Za-z0-9_.-]");
  if (job.source.empty()) throw InvalidJob("source is empty");
  if (job.output.empty()) throw InvalidJob("output is empty");
  check_single_line("source", job.source.native());
  check_single_line("source_root", job.source_root.native());
  check_single_line("output", job.output.native());
  check_single_line("case_id", job.case_id);
  check_single_line("evidence_name", job.evidence_name);
  check_single_line("requested_by", job.requested_by);
  if (job.seq > kMaxSeq) throw InvalidJob("seq exceeds 8 digits");
  const auto year = int(std::chrono::year_month_day{
      std::chrono::floor<std::chrono::days>(job.created_utc)}.year());
  if (year < 0 || year > 9999) throw InvalidJob("created_utc out of range");
  for (const auto& [key, value] : job.params) {
    if (key.empty() || key.find('=') != std::string::npos || has_line_break(key))
      throw InvalidJob("param key '" + key + "' is not representable");
    check_single_line("param." + key, value);
  }
}

JobFileError::JobFileError(Kind kind, std::string message, std::string key,
                           std::size_t line)
    : Error(std::move(message)), kind_(kind), key_(std::move(key)), line_(line) {}

JobFileError JobFileError::missing_key(std::string key) {
  return JobFileError(Kind::MissingKey, "job file: missing key '" + key + "'",
                      key, 0);
}

JobFileError JobFileError::bad_version(std::string found) {
  return JobFileError(Kind::BadVersion,
                      "job file: unsupported version '" + found + "'", "version", 0);
}

JobFileError JobFileError::malformed_line(std::size_t line_no, std::string why) {
  return JobFileError(Kind::MalformedLine,
                      "job file: line " + std::to_string(line_no) + ": " + why,
                      "", line_no);
}

std::string render_job_file(const JobSpec& job) {
  std::string out;
  const auto put = [&out](std::string_view key, std::string_view value) {
    out.append(key).append("=").append(value).append("\n");
  };
  put("version", std::to_string(kJobFileVersion));
  put("job_id", job.job_id);
  put("tool", job.tool);
  put("source", job.source.native());
  put("source_root", job.source_root.native());
  put("output", job.output.native());
  put("case_id", job.case_id);
  put("evidence_name", job.evidence_name);
  put("requested_by", job.requested_by);
  put("created_utc", format_iso_utc(job.created_utc));
  put("seq", std::to_string(job.seq));
  for (const auto& [key, value] : job.params)
    out.append(kParamPrefix).append(key).append("=").append(value).append("\n");
  return out;
}

JobSpec parse_job_file(std::string_view text) {
  struct Line {
    std::size_t no;
    std::string_view key, value;
  };
  std::vector<Line> lines;
  std::size_t no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++no;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw JobFileError::malformed_line(no, "expected key=value");
    if (raw.find('\r') != std::string_view::npos)
      throw JobFileError::malformed_line(no, "carriage return in line");
    lines.push_back({no, raw.substr(0, eq), raw.substr(eq + 1)});
  }

  // Version gate first, so a future format is reported as such rather than
  // as a pile of missing or unknown keys.
  const Line* version = nullptr;
  for (const auto& l : lines)
    if (l.key == "version") {
      if (version) throw JobFileError::malformed_line(l.no, "duplicate key 'version'");
      version = &l;
    }
  if (!version) throw JobFileError::missing_key("version");
  if (version->value != std::to_string(kJobFileVersion))
    throw JobFileError::bad_version(std::string(version->value));

  std::map<std::string_view, const Line*> fields;
  JobSpec job;
  for (const auto& l : lines) {
    if (l.key.substr(0, kParamPrefix.size()) == kParamPrefix) {
      const auto pkey = l.key.substr(kParamPrefix.size());
      if (pkey.empty()) throw JobFileError::malformed_line(l.no, "empty param key");
      job.params.emplace_back(std::string(pkey), std::string(l.value));
      continue;
    }
    if (std::find(kKeyOrder.begin(), kKeyOrder.end(), l.key) == kKeyOrder.end())
      throw JobFileError::malformed_line(l.no, "unknown key '" + std::string(l.key) + "'");
    if (!fields.emplace(l.key, &l).second)
      throw JobFileError::malformed_line(l.no, "duplicate key '" + std::string(l.key) + "'");
  }
  for (const auto key : kKeyOrder)
    if (!fields.count(key)) throw JobFileError::missing_key(std::string(key));

  const auto value = [&](std::string_view key) { return fields.at(key)->value; };
  const auto non_empty = [&](std::string_view key) {
    const auto* l = fields.at(key);
    if (l->value.empty())
      throw JobFileError::malformed_line(l->no, "empty value for '" + std::string(key) + "'");
    return std::string(l->value);
  };

  job.job_id = non_empty("job_id");
  job.tool = non_empty("tool");
  job.source = non_empty("source");
  job.source_root = std::string(value("source_root"));
  job.output = non_empty("output");
  job.case_id = value("case_id");
  job.evidence_name = value("evidence_name");
  job.requested_by = value("requested_by");

  const auto* created = fields.at("created_utc");
  const auto ts = parse_iso_utc(created->value);
  if (!ts) throw JobFileError::malformed_line(created->no, "created_utc is not YYYY-MM-DDThh:mm:ssZ");
  job.created_utc = *ts;

  const auto* seq = fields.at("seq");
  const auto sv = seq->value;
  std::uint64_t n = 0;
  const auto [end, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), n);
  if (sv.empty() || ec != std::errc{} || end != sv.data() + sv.size() || n > kMaxSeq)
    throw JobFileError::malformed_line(seq->no, "seq is not a number of at most 8 digits");
  job.seq = n;

  try {
    validate_job(job);
  } catch (const InvalidJob& e) {
    throw JobFileError::malformed_line(0, e.what());
  }
  return job;
}

std::string job_filename(const JobSpec& job) {
  char seq[16];
  std::snprintf(seq, sizeof seq, "%08llu", static_cast<unsigned long long>(job.seq));
  return format_compact_utc(job.created_utc) + "_" + seq + "_" + job.job_id + ".job";
}

std::string make_job_id() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace evidenceflow
