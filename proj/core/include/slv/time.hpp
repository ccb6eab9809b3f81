#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace slv {

// UTC wall-clock time at one-second precision.
using Timestamp = std::chrono::sys_seconds;

Timestamp now_utc();

// "2024-05-01T12:00:00Z"
std::string format_rfc3339(Timestamp t);

// Accepts "YYYY-MM-DDTHH:MM:SSZ" and the "+00:00" suffix form; throws
// InvalidArgument on anything else.
Timestamp parse_rfc3339(std::string_view text);

} // namespace slv
