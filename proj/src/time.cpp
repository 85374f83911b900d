#include "covidnet/time.hpp"

#include "covidnet/error.hpp"

#include <absl/time/civil_time.h>
#include <absl/time/time.h>

#include <charconv>
#include <cstdio>
#include <mutex>
#include <unordered_map>

namespace covidnet {

namespace {

bool parse_int(std::string_view s, int& out)
{
    if (s.empty()) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

[[noreturn]] void bad_date(std::string_view text)
{
    throw Error(ErrorCode::MalformedPayload, "malformed date: '" + std::string(text) + "'");
}

absl::TimeZone load_zone(const std::string& name)
{
    static std::mutex mu;
    static std::unordered_map<std::string, absl::TimeZone> cache;
    std::lock_guard lock(mu);
    if (auto it = cache.find(name); it != cache.end()) {
        return it->second;
    }
    absl::TimeZone tz;
    if (!absl::LoadTimeZone(name, &tz)) {
        throw Error(ErrorCode::InvalidSource, "unknown timezone: " + name);
    }
    cache.emplace(name, tz);
    return tz;
}

} // namespace

Date Date::parse(std::string_view text)
{
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        bad_date(text);
    }
    int y = 0;
    int m = 0;
    int d = 0;
    if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
        !parse_int(text.substr(8, 2), d)) {
        bad_date(text);
    }
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        bad_date(text);
    }
    return Date{std::chrono::sys_days{ymd}};
}

std::string Date::iso() const
{
    std::chrono::year_month_day ymd{days_};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_instant(Instant t)
{
    auto day = std::chrono::floor<std::chrono::days>(t);
    std::chrono::hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", Date{day}.iso().c_str(),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

Instant parse_instant(std::string_view text)
{
    absl::Time t;
    std::string err;
    if (!absl::ParseTime(absl::RFC3339_full, std::string(text), &t, &err)) {
        throw Error(ErrorCode::MalformedPayload, "malformed timestamp: '" + std::string(text) + "'");
    }
    return Instant{std::chrono::seconds{absl::ToUnixSeconds(t)}};
}

Date local_date(Instant t, const std::string& iana_zone)
{
    auto tz = load_zone(iana_zone);
    auto civil = absl::ToCivilDay(absl::FromUnixSeconds(t.time_since_epoch().count()), tz);
    return Date{static_cast<int>(civil.year()), static_cast<unsigned>(civil.month()),
                static_cast<unsigned>(civil.day())};
}

Date parse_source_date(std::string_view text, const std::string& iana_zone)
{
    if (text.size() == 10) {
        return Date::parse(text);
    }
    return local_date(parse_instant(text), iana_zone);
}

} // namespace covidnet
