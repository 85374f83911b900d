#pragma once

#include "covidnet/region.hpp"
#include "covidnet/time.hpp"

#include <boost/rational.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace covidnet {

enum class Metric { Confirmed, Deceased, Recovered, TestedPositive, TestedNegative, Hospitalized };

inline constexpr std::array kAllMetrics = {Metric::Confirmed,      Metric::Deceased,
                                           Metric::Recovered,      Metric::TestedPositive,
                                           Metric::TestedNegative, Metric::Hospitalized};

std::string_view to_string(Metric metric) noexcept;
/// Case-insensitive; accepts "CONFIRMED", "confirmed", "tested_positive".
Metric parse_metric(std::string_view text);

using Rational = boost::rational<std::int64_t>;

/// Fixed-point rendering of an exact rational, rounded half away from zero.
std::string to_decimal(const Rational& value, int digits = 6);

struct Provenance {
    std::string source_id;
    Instant fetched_at{};

    bool operator==(const Provenance&) const = default;
};

struct DatedValue {
    Date date;
    std::int64_t value = 0;

    bool operator==(const DatedValue&) const = default;
};

struct SeriesPoint {
    std::int64_t value = 0;
    Provenance provenance;

    bool operator==(const SeriesPoint&) const = default;
};

struct SeriesKey {
    std::string region_id;
    Metric metric = Metric::Confirmed;

    auto operator<=>(const SeriesKey&) const = default;
};

/// Per-(region, metric) cumulative counts. Gaps are legal; readers
/// forward-fill.
struct CumulativeSeries {
    std::string region_id;
    Metric metric = Metric::Confirmed;
    std::map<Date, SeriesPoint> points;

    std::vector<DatedValue> values() const;
    std::optional<DatedValue> latest() const;
    /// Value at `date`, forward-filled from the latest earlier point.
    std::optional<std::int64_t> value_at(Date date) const;
    /// Latest point strictly before `date`.
    std::optional<DatedValue> before(Date date) const;
    bool is_monotonic() const;

    bool operator==(const CumulativeSeries&) const = default;
};

/// ET row: one case or small cluster, with the links it was sourced from.
struct CaseRecord {
    std::string record_id;
    std::string region_id;
    Date report_date;
    std::int64_t cluster_size = 1;
    Metric metric = Metric::Confirmed;
    std::map<std::string, std::string> demographics;
    std::string summary;
    std::vector<std::string> source_refs;
    /// Feed or issue the record came in through.
    std::string origin;

    void validate() const;
    bool operator==(const CaseRecord&) const = default;
};

/// SA row.
struct StatRow {
    std::string region_id;
    std::int64_t confirmed = 0;
    std::int64_t deceased = 0;
    std::optional<std::int64_t> recovered;
    std::optional<Rational> confirmed_per_million;
    std::optional<Rational> deceased_per_million;
    std::optional<Rational> fatality_rate;
    std::optional<std::string> health_dept_contact;

    bool operator==(const StatRow&) const = default;
};

struct DataInconsistent {
    std::int64_t confirmed = 0;
    std::int64_t deceased = 0;
    std::int64_t recovered = 0;
};
using ActiveResult = std::variant<std::int64_t, DataInconsistent>;

struct AlignedPoint {
    int day = 0;
    std::int64_t value = 0;

    bool operator==(const AlignedPoint&) const = default;
};
struct BelowThreshold {
    std::int64_t max_value = 0;
};
using AlignmentResult = std::variant<std::vector<AlignedPoint>, BelowThreshold>;

struct CompactTable {
    std::vector<Date> dates;
    std::vector<std::string> region_ids;
    std::vector<std::vector<std::int64_t>> rows;
};

/// Backward-clamps every stored value above `new_value` down to it and
/// appends the new point. Equality is not a decrease and just appends.
/// Throws NotADecrease if new_value exceeds the last value, OutOfOrderDate
/// if new_date is not after the last date.
std::vector<DatedValue> monotonic_repair(std::span<const DatedValue> series, Date new_date,
                                         std::int64_t new_value);

/// Per-day sums of cluster sizes turned into running totals, per
/// (region, metric). Demographics are dropped.
std::map<SeriesKey, std::vector<DatedValue>> aggregate_case_records(std::span<const CaseRecord> records,
                                                                    const RegionTree& regions);

/// Day 0 is the first date with value >= threshold; later days are calendar
/// offsets from it.
AlignmentResult align_at_threshold(std::span<const DatedValue> series, std::int64_t threshold);

std::vector<DatedValue> daily_new(std::span<const DatedValue> series);

Rational per_million(std::int64_t value, std::int64_t population);

StatRow make_stat_row(const Region& region, std::int64_t confirmed, std::int64_t deceased,
                      std::optional<std::int64_t> recovered);

/// "region_id,<date>,<date>,...\n" then one forward-filled row per region.
std::string write_ct_csv(const CompactTable& table);

/// record_id,region_id,report_date,metric,cluster_size,demographics,summary,source_refs
/// with demographics as "k=v;k=v" and source_refs pipe-separated.
std::string write_et_csv(std::span<const CaseRecord> records);

/// Committed cumulative series plus the ET record set. Writers are
/// serialized; every read returns a snapshot copy.
class SeriesStore {
public:
    explicit SeriesStore(const RegionTree& regions);
    SeriesStore(const SeriesStore&) = delete;
    SeriesStore& operator=(const SeriesStore&) = delete;

    /// Stores one point. Overwrites an existing date. Throws
    /// MonotonicityViolation if the value is below its predecessor or above
    /// its successor.
    CumulativeSeries commit_point(const std::string& region_id, Metric metric, Date date, std::int64_t value,
                                  const Provenance& provenance);

    /// Atomically replaces the whole series. Throws NonMonotonicPayload.
    CumulativeSeries replace_history(const std::string& region_id, Metric metric,
                                     std::span<const DatedValue> points, const Provenance& provenance);

    /// Applies a lower value at `date` by clamping every earlier point above
    /// it. Later points must already be >= value.
    CumulativeSeries repair_commit(const std::string& region_id, Metric metric, Date date, std::int64_t value,
                                   const Provenance& provenance);

    /// Operator override: stores the value and clamps earlier points down
    /// and later points up so the series stays non-decreasing.
    CumulativeSeries force_commit(const std::string& region_id, Metric metric, Date date, std::int64_t value,
                                  const Provenance& provenance);

    std::optional<CumulativeSeries> series(const std::string& region_id, Metric metric) const;
    std::optional<std::int64_t> value_at(const std::string& region_id, Metric metric, Date date) const;
    std::vector<SeriesKey> keys() const;

    CompactTable to_compact_table(std::span<const std::string> region_ids, Metric metric, Date from,
                                  Date to) const;
    /// Table over every region holding `metric` data, dates spanning all of
    /// it. Empty when nothing is stored.
    CompactTable to_compact_table(Metric metric) const;

    ActiveResult derive_active(const std::string& region_id, Date date) const;
    std::vector<StatRow> stat_rows(std::span<const std::string> region_ids,
                                   std::optional<Date> date = std::nullopt) const;

    /// Inserts a record unless its id is already present. Returns whether
    /// it was inserted.
    bool add_case_record(CaseRecord record);
    bool has_case_record(const std::string& record_id) const;
    std::vector<CaseRecord> case_records(std::optional<std::string> region_id = std::nullopt) const;

    /// SHA-256 over a canonical dump of series and records.
    std::string digest() const;
    /// JSON text; `restore` accepts it back.
    std::string canonical_dump() const;
    void restore(std::string_view dump);

    const RegionTree& regions() const { return regions_; }

private:
    void require_region(const std::string& region_id) const;

    const RegionTree& regions_;
    mutable std::shared_mutex mu_;
    std::map<SeriesKey, CumulativeSeries> series_;
    std::map<std::string, CaseRecord> records_;
    std::vector<std::string> record_order_;
};

} // namespace covidnet
