#include "evidenceflow/timeutil.hpp"

#include <cstdio>

namespace evidenceflow {

using namespace std::chrono;

UtcTime now_utc() { return floor<seconds>(system_clock::now()); }

namespace {

struct Fields {
  int year;
  unsigned month, day;
  long hour, minute, second;
};

Fields split(UtcTime t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  return {int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
          long(hms.hours().count()), long(hms.minutes().count()),
          long(hms.seconds().count())};
}

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

std::optional<UtcTime> make_time(int y, int mo, int d, int h, int mi, int s) {
  const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

}  // namespace

std::string format_iso_utc(UtcTime t) {
  const Fields f = split(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", f.year,
                f.month, f.day, f.hour, f.minute, f.second);
  return buf;
}

std::string format_compact_utc(UtcTime t) {
  const Fields f = split(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%02u%02uT%02ld%02ld%02ldZ", f.year,
                f.month, f.day, f.hour, f.minute, f.second);
  return buf;
}

std::optional<UtcTime> parse_iso_utc(std::string_view s) {
  // YYYY-MM-DDThh:mm:ssZ
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' ||
      s[13] != ':' || s[16] != ':' || s[19] != 'Z')
    return std::nullopt;
  int y, mo, d, h, mi, sec;
  if (!read_digits(s, 0, 4, y) || !read_digits(s, 5, 2, mo) ||
      !read_digits(s, 8, 2, d) || !read_digits(s, 11, 2, h) ||
      !read_digits(s, 14, 2, mi) || !read_digits(s, 17, 2, sec))
    return std::nullopt;
  return make_time(y, mo, d, h, mi, sec);
}

std::optional<UtcTime> parse_utc_loose(std::string_view s) {
  if (s.size() == 10) {
    int y, mo, d;
    if (s[4] != '-' || s[7] != '-' || !read_digits(s, 0, 4, y) ||
        !read_digits(s, 5, 2, mo) || !read_digits(s, 8, 2, d))
      return std::nullopt;
    return make_time(y, mo, d, 0, 0, 0);
  }
  return parse_iso_utc(s);
}

}  // namespace evidenceflow
