#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace amigo {

using Millis = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<Millis>;

/// Formats as RFC 3339 UTC, e.g. "2026-01-05T03:00:00.250Z". Milliseconds
/// are emitted only when non-zero.
std::string format_rfc3339(Instant t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fraction](Z|+hh:mm|-hh:mm)". Throws a parse
/// error otherwise.
Instant parse_rfc3339(std::string_view text);

/// Days since 1970-01-01 for the UTC calendar day containing t.
std::int64_t utc_day(Instant t);

/// Hour of day, 0-23, in UTC.
int utc_hour(Instant t);

Instant wall_now();

inline Instant from_seconds(double s) {
    return Instant{Millis{static_cast<std::int64_t>(s * 1000.0)}};
}

inline double to_seconds(Millis d) { return static_cast<double>(d.count()) / 1000.0; }

}  // namespace amigo
