#pragma once

#include <cstdint>
#include <string>

namespace forge {

// Timestamps are seconds since the Unix epoch, always UTC. Artifact files
// serialize them as RFC 3339 strings so they stay human-readable.
using Timestamp = std::int64_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;

// Parses "YYYY-MM-DD", "YYYY-MM-DDThh:mm:ssZ" or the same with a
// "+hh:mm"/"-hh:mm" offset. Throws DataError on anything else.
Timestamp parse_rfc3339(const std::string& text);

// Formats as "YYYY-MM-DDThh:mm:ssZ".
std::string format_rfc3339(Timestamp t);

// Fractional days between two instants (b - a).
double days_between(Timestamp a, Timestamp b);

// Closed time interval. Used for corpus selection and graph manifests.
struct TimeWindow {
    Timestamp start = 0;
    Timestamp end = 0;

    bool contains(Timestamp t) const { return t >= start && t <= end; }
};

} // namespace forge
