#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace evidenceflow {

using UtcTime = std::chrono::sys_seconds;

UtcTime now_utc();

// "2014-07-02T00:40:00Z"
std::string format_iso_utc(UtcTime t);
// "20140702T004000Z", the form used in job filenames.
std::string format_compact_utc(UtcTime t);

// Accepts exactly "YYYY-MM-DDThh:mm:ssZ".
std::optional<UtcTime> parse_iso_utc(std::string_view text);
// Accepts "YYYY-MM-DDThh:mm:ssZ" or a bare "YYYY-MM-DD" (midnight).
std::optional<UtcTime> parse_utc_loose(std::string_view text);

}  // namespace evidenceflow
