#include "nudge/error.hpp"
#include "nudge/time.hpp"

#include <doctest.h>

using namespace nudge;
using namespace std::chrono;

TEST_CASE("rfc3339 round trip") {
    const auto t = parse_rfc3339("2024-03-05T14:30:07Z");
    CHECK(format_rfc3339(t) == "2024-03-05T14:30:07Z");
    CHECK(parse_rfc3339("2024-03-05T22:30:07+08:00") == t);
    CHECK(parse_rfc3339("2024-03-05T14:30:07.999Z") == t);
    CHECK_THROWS_AS(parse_rfc3339("2024-03-05 14:30"), Error);
    CHECK_THROWS_AS(parse_rfc3339("2024-13-05T14:30:07Z"), Error);
}

TEST_CASE("utc offsets") {
    CHECK(UtcOffset::parse("Z").value == minutes(0));
    CHECK(UtcOffset::parse("+08:00").value == minutes(480));
    CHECK(UtcOffset::parse("-0530").value == minutes(-330));
    CHECK(UtcOffset::parse("+08:00").to_string() == "+08:00");
    CHECK_THROWS_AS(UtcOffset::parse("+25:00"), Error);
}

TEST_CASE("local calendar helpers") {
    const auto off = UtcOffset::parse("+08:00");
    const auto t = parse_rfc3339("2024-03-05T18:30:00Z"); // 02:30 next day locally
    CHECK(format_date(local_date(t, off)) == "2024-03-06");
    CHECK(local_hour(t, off) == 2);
    CHECK(format_local(t, off) == "2024-03-06 02:30");
    CHECK(local_midnight(t, off) == parse_rfc3339("2024-03-05T16:00:00Z"));
    CHECK(local_midnight(parse_date("2024-03-06"), off) == parse_rfc3339("2024-03-05T16:00:00Z"));
}
