#include "slv/time.hpp"

#include <cstdio>
#include <ctime>

#include "slv/error.hpp"

namespace slv {

Timestamp now_utc() {
  return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string format_rfc3339(Timestamp t) {
  const std::time_t raw = t.time_since_epoch().count();
  std::tm tm{};
  gmtime_r(&raw, &tm);
  char buf[32];
  const std::size_t n = std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {buf, n};
}

Timestamp parse_rfc3339(std::string_view text) {
  const std::string s(text);
  int year = 0, mon = 0, day = 0, hour = 0, min = 0, sec = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &year, &mon, &day, &hour, &min, &sec,
                  &consumed) != 6) {
    throw InvalidArgument("not an RFC3339 timestamp: " + s);
  }
  const std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (rest != "Z" && rest != "z" && rest != "+00:00") {
    throw InvalidArgument("only UTC timestamps are accepted: " + s);
  }
  if (mon < 1 || mon > 12 || day < 1 || day > 31 || hour > 23 || min > 59 || sec > 60) {
    throw InvalidArgument("timestamp field out of range: " + s);
  }
  std::tm tm{};
  tm.tm_year = year - 1900;
  tm.tm_mon = mon - 1;
  tm.tm_mday = day;
  tm.tm_hour = hour;
  tm.tm_min = min;
  tm.tm_sec = sec;
  return Timestamp{std::chrono::seconds{timegm(&tm)}};
}

} // namespace slv
