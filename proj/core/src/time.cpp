#include "nudge/time.hpp"

#include "nudge/error.hpp"

#include <cctype>
#include <cstdio>
#include <string>

namespace nudge {

namespace {

using namespace std::chrono;

bool read_int(std::string_view text, std::size_t& pos, std::size_t digits, int& out) {
    if (pos + digits > text.size()) {
        return false;
    }
    int value = 0;
    for (std::size_t i = 0; i < digits; ++i) {
        const char c = text[pos + i];
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            return false;
        }
        value = value * 10 + (c - '0');
    }
    pos += digits;
    out = value;
    return true;
}

bool expect(std::string_view text, std::size_t& pos, char c) {
    if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
    }
    return false;
}

minutes parse_offset_at(std::string_view text, std::size_t& pos) {
    if (pos >= text.size()) {
        throw Error(Errc::Parse, "missing UTC offset in '" + std::string(text) + "'");
    }
    if (text[pos] == 'Z' || text[pos] == 'z') {
        ++pos;
        return minutes{0};
    }
    const char sign = text[pos];
    if (sign != '+' && sign != '-') {
        throw Error(Errc::Parse, "bad UTC offset in '" + std::string(text) + "'");
    }
    ++pos;
    int hh = 0;
    int mm = 0;
    if (!read_int(text, pos, 2, hh)) {
        throw Error(Errc::Parse, "bad UTC offset hours in '" + std::string(text) + "'");
    }
    expect(text, pos, ':');
    if (!read_int(text, pos, 2, mm) || hh > 23 || mm > 59) {
        throw Error(Errc::Parse, "bad UTC offset minutes in '" + std::string(text) + "'");
    }
    const minutes total = hours{hh} + minutes{mm};
    return sign == '-' ? -total : total;
}

} // namespace

UtcOffset UtcOffset::parse(std::string_view text) {
    if (text == "UTC" || text == "utc" || text.empty()) {
        return {};
    }
    std::size_t pos = 0;
    UtcOffset out{parse_offset_at(text, pos)};
    if (pos != text.size()) {
        throw Error(Errc::Parse, "trailing characters in UTC offset '" + std::string(text) + "'");
    }
    return out;
}

std::string UtcOffset::to_string() const {
    const auto total = value.count();
    const char sign = total < 0 ? '-' : '+';
    const auto abs_minutes = total < 0 ? -total : total;
    char buf[8];
    std::snprintf(buf, sizeof buf, "%c%02d:%02d", sign, static_cast<int>(abs_minutes / 60),
                  static_cast<int>(abs_minutes % 60));
    return buf;
}

Timestamp parse_rfc3339(std::string_view text) {
    std::size_t pos = 0;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const bool ok = read_int(text, pos, 4, y) && expect(text, pos, '-') && read_int(text, pos, 2, mo) &&
                    expect(text, pos, '-') && read_int(text, pos, 2, d) &&
                    (expect(text, pos, 'T') || expect(text, pos, 't') || expect(text, pos, ' ')) &&
                    read_int(text, pos, 2, h) && expect(text, pos, ':') && read_int(text, pos, 2, mi) &&
                    expect(text, pos, ':') && read_int(text, pos, 2, s);
    if (!ok) {
        throw Error(Errc::Parse, "not an RFC 3339 timestamp: '" + std::string(text) + "'");
    }
    if (expect(text, pos, '.')) {
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
    }
    const minutes offset = parse_offset_at(text, pos);
    if (pos != text.size()) {
        throw Error(Errc::Parse, "trailing characters in timestamp '" + std::string(text) + "'");
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
        throw Error(Errc::Parse, "timestamp out of range: '" + std::string(text) + "'");
    }
    const auto local = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
    return time_point_cast<seconds>(local - offset);
}

std::string format_rfc3339(Timestamp ts) {
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const hh_mm_ss tod{ts - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()));
    return buf;
}

sys_days local_date(Timestamp ts, UtcOffset offset) {
    return floor<days>(ts + offset.value);
}

Timestamp local_midnight(Timestamp ts, UtcOffset offset) {
    return local_midnight(local_date(ts, offset), offset);
}

Timestamp local_midnight(sys_days date, UtcOffset offset) {
    return time_point_cast<seconds>(Timestamp{date} - offset.value);
}

int local_hour(Timestamp ts, UtcOffset offset) {
    const auto local = ts + offset.value;
    return static_cast<int>(floor<hours>(local - floor<days>(local)).count());
}

std::string format_local(Timestamp ts, UtcOffset offset) {
    const auto local = ts + offset.value;
    const auto day_point = floor<days>(local);
    const year_month_day ymd{day_point};
    const hh_mm_ss tod{local - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()));
    return buf;
}

std::string format_date(sys_days date) {
    const year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

sys_days parse_date(std::string_view text) {
    std::size_t pos = 0;
    int y = 0, mo = 0, d = 0;
    const bool ok = read_int(text, pos, 4, y) && expect(text, pos, '-') && read_int(text, pos, 2, mo) &&
                    expect(text, pos, '-') && read_int(text, pos, 2, d) && pos == text.size();
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ok || !ymd.ok()) {
        throw Error(Errc::Parse, "not a YYYY-MM-DD date: '" + std::string(text) + "'");
    }
    return sys_days{ymd};
}

} // namespace nudge
