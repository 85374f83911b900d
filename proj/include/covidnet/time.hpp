#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace covidnet {

using Instant = std::chrono::sys_seconds;

/// Calendar date without a time component, interpreted in the reporting
/// authority's local timezone.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
    constexpr Date(int year, unsigned month, unsigned day)
        : days_(std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day})
    {
    }

    /// Parses "YYYY-MM-DD". Throws Error(MalformedPayload) on bad input.
    static Date parse(std::string_view text);

    std::string iso() const;
    constexpr std::chrono::sys_days days() const { return days_; }

    constexpr Date operator+(int n) const { return Date{days_ + std::chrono::days{n}}; }
    constexpr Date operator-(int n) const { return Date{days_ - std::chrono::days{n}}; }
    constexpr int operator-(Date other) const
    {
        return static_cast<int>((days_ - other.days_).count());
    }

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

/// "2020-04-15T10:00:00Z"
std::string format_instant(Instant t);
Instant parse_instant(std::string_view text);

/// Local calendar date of an instant in an IANA zone. Throws
/// Error(InvalidSource) if the zone cannot be loaded.
Date local_date(Instant t, const std::string& iana_zone);

/// Accepts a plain date ("2020-03-01") or an RFC 3339 timestamp with a
/// "Z" or "+hh:mm" offset. Plain dates are taken as already local;
/// timestamps are converted to the given zone.
Date parse_source_date(std::string_view text, const std::string& iana_zone);

} // namespace covidnet
