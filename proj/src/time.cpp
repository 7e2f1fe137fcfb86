#include "forge/time.hpp"

#include "forge/errors.hpp"

#include <array>
#include <cstdio>

namespace forge {
namespace {

// Days since 1970-01-01 for a civil date (Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, std::int64_t m, std::int64_t d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const std::int64_t yoe = y - era * 400;
    const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

bool all_digits(const std::string& s, std::size_t from, std::size_t count) {
    if (from + count > s.size()) return false;
    for (std::size_t i = from; i < from + count; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    return true;
}

int num(const std::string& s, std::size_t from, std::size_t count) {
    int v = 0;
    for (std::size_t i = from; i < from + count; ++i) v = v * 10 + (s[i] - '0');
    return v;
}

[[noreturn]] void bad(const std::string& text) {
    throw DataError("not an RFC 3339 timestamp: \"" + text + "\"");
}

} // namespace

Timestamp parse_rfc3339(const std::string& text) {
    // Date part: YYYY-MM-DD
    if (!all_digits(text, 0, 4) || text.size() < 10 || text[4] != '-' ||
        !all_digits(text, 5, 2) || text[7] != '-' || !all_digits(text, 8, 2)) {
        bad(text);
    }
    const int year = num(text, 0, 4);
    const int month = num(text, 5, 2);
    const int day = num(text, 8, 2);
    if (month < 1 || month > 12 || day < 1 || day > 31) bad(text);

    const std::int64_t days = days_from_civil(year, month, day);
    {
        // days_from_civil silently normalizes impossible dates (Feb 30);
        // a round-trip catches them.
        int yy, mm2, dd;
        civil_from_days(days, yy, mm2, dd);
        if (yy != year || mm2 != month || dd != day) bad(text);
    }
    std::int64_t secs = days * kSecondsPerDay;
    if (text.size() == 10) return secs; // date only, midnight UTC

    if (text.size() < 20 || (text[10] != 'T' && text[10] != 't' && text[10] != ' ')) bad(text);
    if (!all_digits(text, 11, 2) || text[13] != ':' || !all_digits(text, 14, 2) ||
        text[16] != ':' || !all_digits(text, 17, 2)) {
        bad(text);
    }
    const int hh = num(text, 11, 2);
    const int mm = num(text, 14, 2);
    const int ss = num(text, 17, 2);
    if (hh > 23 || mm > 59 || ss > 60) bad(text);
    secs += hh * 3600 + mm * 60 + ss;

    std::size_t pos = 19;
    // Optional fractional seconds: kept only to the second.
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        const std::size_t digits_at = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == digits_at) bad(text);
    }
    if (pos >= text.size()) bad(text);
    const char tz = text[pos];
    if (tz == 'Z' || tz == 'z') {
        if (pos + 1 != text.size()) bad(text);
        return secs;
    }
    if (tz != '+' && tz != '-') bad(text);
    if (pos + 6 != text.size() || !all_digits(text, pos + 1, 2) || text[pos + 3] != ':' ||
        !all_digits(text, pos + 4, 2)) {
        bad(text);
    }
    const std::int64_t off = num(text, pos + 1, 2) * 3600 + num(text, pos + 4, 2) * 60;
    return tz == '+' ? secs - off : secs + off;
}

std::string format_rfc3339(Timestamp t) {
    std::int64_t days = t / kSecondsPerDay;
    std::int64_t rem = t % kSecondsPerDay;
    if (rem < 0) {
        rem += kSecondsPerDay;
        --days;
    }
    int y = 0, m = 0, d = 0;
    civil_from_days(days, y, m, d);
    std::array<char, 24> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                  static_cast<int>(rem % 60));
    return std::string(buf.data());
}

double days_between(Timestamp a, Timestamp b) {
    return static_cast<double>(b - a) / static_cast<double>(kSecondsPerDay);
}

} // namespace forge
