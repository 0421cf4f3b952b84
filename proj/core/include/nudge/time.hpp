#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace nudge {

using Timestamp = std::chrono::sys_seconds;

// Fixed offset from UTC; users carry one of these instead of an IANA zone.
struct UtcOffset {
    std::chrono::minutes value{0};

    // Accepts "Z", "UTC", "+08:00", "-0530".
    static UtcOffset parse(std::string_view text);
    std::string to_string() const;

    friend bool operator==(const UtcOffset&, const UtcOffset&) = default;
};

// RFC 3339 with second precision. Parsing accepts fractional seconds (truncated)
// and numeric offsets; formatting always emits UTC with a trailing 'Z'.
Timestamp parse_rfc3339(std::string_view text);
std::string format_rfc3339(Timestamp ts);

// Day number (days since epoch) of the local calendar date of ts.
std::chrono::sys_days local_date(Timestamp ts, UtcOffset offset);

// The UTC instant at which the local day containing ts began.
Timestamp local_midnight(Timestamp ts, UtcOffset offset);

// The UTC instant of local midnight on a given local date.
Timestamp local_midnight(std::chrono::sys_days date, UtcOffset offset);

int local_hour(Timestamp ts, UtcOffset offset);

// "YYYY-MM-DD HH:MM" in local time.
std::string format_local(Timestamp ts, UtcOffset offset);

// "YYYY-MM-DD"
std::string format_date(std::chrono::sys_days date);
std::chrono::sys_days parse_date(std::string_view text);

} // namespace nudge
