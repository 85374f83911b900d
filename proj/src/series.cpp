#include "covidnet/series.hpp"

#include "covidnet/digest.hpp"
#include "covidnet/error.hpp"
#include "covidnet/json_io.hpp"
#include "csv.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <set>

namespace covidnet {

namespace {

std::string upper(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

} // namespace

std::string_view to_string(Metric metric) noexcept
{
    switch (metric) {
    case Metric::Confirmed: return "CONFIRMED";
    case Metric::Deceased: return "DECEASED";
    case Metric::Recovered: return "RECOVERED";
    case Metric::TestedPositive: return "TESTED_POSITIVE";
    case Metric::TestedNegative: return "TESTED_NEGATIVE";
    case Metric::Hospitalized: return "HOSPITALIZED";
    }
    return "?";
}

Metric parse_metric(std::string_view text)
{
    auto u = upper(text);
    for (auto m : kAllMetrics) {
        if (to_string(m) == u) {
            return m;
        }
    }
    throw Error(ErrorCode::Validation, "unknown metric: " + std::string(text));
}

std::string to_decimal(const Rational& value, int digits)
{
    __int128 scale = 1;
    for (int i = 0; i < digits; ++i) {
        scale *= 10;
    }
    __int128 num = value.numerator();
    __int128 den = value.denominator();
    bool negative = num < 0;
    if (negative) {
        num = -num;
    }
    __int128 scaled = (num * scale * 2 + den) / (den * 2);
    auto whole = static_cast<long long>(scaled / scale);
    auto frac = static_cast<long long>(scaled % scale);
    std::string out = (negative && scaled != 0 ? "-" : "") + std::to_string(whole);
    if (digits > 0) {
        auto f = std::to_string(frac);
        out += "." + std::string(static_cast<std::size_t>(digits) - f.size(), '0') + f;
    }
    return out;
}

// CumulativeSeries ---------------------------------------------------------

std::vector<DatedValue> CumulativeSeries::values() const
{
    std::vector<DatedValue> out;
    out.reserve(points.size());
    for (const auto& [date, point] : points) {
        out.push_back({date, point.value});
    }
    return out;
}

std::optional<DatedValue> CumulativeSeries::latest() const
{
    if (points.empty()) {
        return std::nullopt;
    }
    const auto& [date, point] = *points.rbegin();
    return DatedValue{date, point.value};
}

std::optional<std::int64_t> CumulativeSeries::value_at(Date date) const
{
    auto it = points.upper_bound(date);
    if (it == points.begin()) {
        return std::nullopt;
    }
    return std::prev(it)->second.value;
}

std::optional<DatedValue> CumulativeSeries::before(Date date) const
{
    auto it = points.lower_bound(date);
    if (it == points.begin()) {
        return std::nullopt;
    }
    --it;
    return DatedValue{it->first, it->second.value};
}

bool CumulativeSeries::is_monotonic() const
{
    std::optional<std::int64_t> prev;
    for (const auto& [date, point] : points) {
        if (point.value < 0 || (prev && point.value < *prev)) {
            return false;
        }
        prev = point.value;
    }
    return true;
}

void CaseRecord::validate() const
{
    if (cluster_size < 1) {
        throw Error(ErrorCode::Validation, "case record " + record_id + ": cluster_size must be >= 1");
    }
    if (source_refs.empty()) {
        throw Error(ErrorCode::Validation, "case record " + record_id + ": needs at least one source reference");
    }
}

// Pure analytics -----------------------------------------------------------

std::vector<DatedValue> monotonic_repair(std::span<const DatedValue> series, Date new_date, std::int64_t new_value)
{
    if (!series.empty()) {
        if (new_value > series.back().value) {
            throw Error(ErrorCode::NotADecrease, "value " + std::to_string(new_value) +
                                                     " is above the last stored value " +
                                                     std::to_string(series.back().value));
        }
        if (new_date <= series.back().date) {
            throw Error(ErrorCode::OutOfOrderDate, "repair date " + new_date.iso() + " is not after " +
                                                       series.back().date.iso());
        }
    }
    std::vector<DatedValue> out(series.begin(), series.end());
    for (auto it = out.rbegin(); it != out.rend() && it->value > new_value; ++it) {
        it->value = new_value;
    }
    out.push_back({new_date, new_value});
    return out;
}

std::map<SeriesKey, std::vector<DatedValue>> aggregate_case_records(std::span<const CaseRecord> records,
                                                                    const RegionTree& regions)
{
    std::map<SeriesKey, std::map<Date, std::int64_t>> daily;
    for (const auto& r : records) {
        if (!regions.contains(r.region_id)) {
            throw Error(ErrorCode::UnknownRegion, "case record " + r.record_id + ": unknown region " + r.region_id);
        }
        daily[{r.region_id, r.metric}][r.report_date] += r.cluster_size;
    }
    std::map<SeriesKey, std::vector<DatedValue>> out;
    for (auto& [key, per_day] : daily) {
        auto& cumulative = out[key];
        std::int64_t running = 0;
        for (const auto& [date, count] : per_day) {
            running += count;
            cumulative.push_back({date, running});
        }
    }
    return out;
}

AlignmentResult align_at_threshold(std::span<const DatedValue> series, std::int64_t threshold)
{
    if (threshold <= 0) {
        throw Error(ErrorCode::Validation, "alignment threshold must be positive");
    }
    auto first = std::find_if(series.begin(), series.end(),
                              [threshold](const DatedValue& v) { return v.value >= threshold; });
    if (first == series.end()) {
        std::int64_t max_value = 0;
        for (const auto& v : series) {
            max_value = std::max(max_value, v.value);
        }
        return BelowThreshold{max_value};
    }
    std::vector<AlignedPoint> out;
    for (auto it = first; it != series.end(); ++it) {
        out.push_back({it->date - first->date, it->value});
    }
    return out;
}

std::vector<DatedValue> daily_new(std::span<const DatedValue> series)
{
    std::vector<DatedValue> out;
    out.reserve(series.size());
    std::int64_t prev = 0;
    for (const auto& v : series) {
        out.push_back({v.date, v.value - prev});
        prev = v.value;
    }
    return out;
}

Rational per_million(std::int64_t value, std::int64_t population)
{
    if (population <= 0) {
        throw Error(ErrorCode::ZeroPopulation, "per-million density needs a positive population");
    }
    return Rational(value) * 1'000'000 / population;
}

StatRow make_stat_row(const Region& region, std::int64_t confirmed, std::int64_t deceased,
                      std::optional<std::int64_t> recovered)
{
    StatRow row;
    row.region_id = region.id;
    row.confirmed = confirmed;
    row.deceased = deceased;
    row.recovered = recovered;
    if (region.population && *region.population > 0) {
        row.confirmed_per_million = per_million(confirmed, *region.population);
        row.deceased_per_million = per_million(deceased, *region.population);
    }
    if (confirmed > 0) {
        row.fatality_rate = Rational(deceased, confirmed);
    }
    row.health_dept_contact = region.health_dept_contact;
    return row;
}

std::string write_ct_csv(const CompactTable& table)
{
    std::string out = "region_id";
    for (const auto& d : table.dates) {
        out += "," + d.iso();
    }
    out += "\n";
    for (std::size_t i = 0; i < table.region_ids.size(); ++i) {
        out += csv::escape(table.region_ids[i]);
        for (auto v : table.rows[i]) {
            out += "," + std::to_string(v);
        }
        out += "\n";
    }
    return out;
}

std::string write_et_csv(std::span<const CaseRecord> records)
{
    std::string out = "record_id,region_id,report_date,metric,cluster_size,demographics,summary,source_refs\n";
    for (const auto& r : records) {
        std::string demo;
        for (const auto& [k, v] : r.demographics) {
            demo += (demo.empty() ? "" : ";") + k + "=" + v;
        }
        std::string refs;
        for (const auto& ref : r.source_refs) {
            refs += (refs.empty() ? "" : "|") + ref;
        }
        out += csv::escape(r.record_id) + "," + csv::escape(r.region_id) + "," + r.report_date.iso() + "," +
               std::string(to_string(r.metric)) + "," + std::to_string(r.cluster_size) + "," + csv::escape(demo) +
               "," + csv::escape(r.summary) + "," + csv::escape(refs) + "\n";
    }
    return out;
}

// SeriesStore --------------------------------------------------------------

SeriesStore::SeriesStore(const RegionTree& regions) : regions_(regions) {}

void SeriesStore::require_region(const std::string& region_id) const
{
    if (!regions_.contains(region_id)) {
        throw Error(ErrorCode::UnknownRegion, "unknown region: " + region_id);
    }
}

CumulativeSeries SeriesStore::commit_point(const std::string& region_id, Metric metric, Date date,
                                           std::int64_t value, const Provenance& provenance)
{
    require_region(region_id);
    if (value < 0) {
        throw Error(ErrorCode::Validation, "counts are non-negative");
    }
    std::unique_lock lock(mu_);
    auto& s = series_[{region_id, metric}];
    s.region_id = region_id;
    s.metric = metric;
    auto next = s.points.upper_bound(date);
    if (next != s.points.end() && next->second.value < value) {
        throw Error(ErrorCode::MonotonicityViolation, region_id + " " + std::string(to_string(metric)) + " " +
                                                          date.iso() + ": " + std::to_string(value) +
                                                          " exceeds later value " + std::to_string(next->second.value));
    }
    if (auto prev = s.before(date); prev && prev->value > value) {
        throw Error(ErrorCode::MonotonicityViolation, region_id + " " + std::string(to_string(metric)) + " " +
                                                          date.iso() + ": " + std::to_string(value) +
                                                          " is below earlier value " + std::to_string(prev->value));
    }
    auto [it, inserted] = s.points.try_emplace(date, SeriesPoint{value, provenance});
    if (!inserted && it->second.value != value) {
        it->second = SeriesPoint{value, provenance};
    }
    return s;
}

CumulativeSeries SeriesStore::replace_history(const std::string& region_id, Metric metric,
                                              std::span<const DatedValue> points, const Provenance& provenance)
{
    require_region(region_id);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].value < 0 || (i > 0 && (points[i].date <= points[i - 1].date ||
                                              points[i].value < points[i - 1].value))) {
            throw Error(ErrorCode::NonMonotonicPayload,
                        region_id + ": history payload must have increasing dates and non-decreasing counts");
        }
    }
    std::unique_lock lock(mu_);
    auto& s = series_[{region_id, metric}];
    s.region_id = region_id;
    s.metric = metric;
    std::map<Date, SeriesPoint> replacement;
    for (const auto& p : points) {
        auto old = s.points.find(p.date);
        // Unchanged points keep the provenance of the fetch that first stored them.
        if (old != s.points.end() && old->second.value == p.value) {
            replacement.emplace(p.date, old->second);
        }
        else {
            replacement.emplace(p.date, SeriesPoint{p.value, provenance});
        }
    }
    s.points = std::move(replacement);
    return s;
}

CumulativeSeries SeriesStore::repair_commit(const std::string& region_id, Metric metric, Date date,
                                            std::int64_t value, const Provenance& provenance)
{
    require_region(region_id);
    if (value < 0) {
        throw Error(ErrorCode::Validation, "counts are non-negative");
    }
    std::unique_lock lock(mu_);
    auto& s = series_[{region_id, metric}];
    s.region_id = region_id;
    s.metric = metric;
    auto next = s.points.upper_bound(date);
    if (next != s.points.end() && next->second.value < value) {
        throw Error(ErrorCode::MonotonicityViolation, region_id + ": repair value exceeds a later point");
    }
    for (auto it = s.points.begin(); it != s.points.end() && it->first < date; ++it) {
        if (it->second.value > value) {
            it->second = SeriesPoint{value, provenance};
        }
    }
    s.points[date] = SeriesPoint{value, provenance};
    return s;
}

CumulativeSeries SeriesStore::force_commit(const std::string& region_id, Metric metric, Date date,
                                           std::int64_t value, const Provenance& provenance)
{
    require_region(region_id);
    if (value < 0) {
        throw Error(ErrorCode::Validation, "counts are non-negative");
    }
    std::unique_lock lock(mu_);
    auto& s = series_[{region_id, metric}];
    s.region_id = region_id;
    s.metric = metric;
    for (auto& [d, point] : s.points) {
        if ((d < date && point.value > value) || (d > date && point.value < value)) {
            point = SeriesPoint{value, provenance};
        }
    }
    s.points[date] = SeriesPoint{value, provenance};
    return s;
}

std::optional<CumulativeSeries> SeriesStore::series(const std::string& region_id, Metric metric) const
{
    std::shared_lock lock(mu_);
    auto it = series_.find({region_id, metric});
    if (it == series_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::int64_t> SeriesStore::value_at(const std::string& region_id, Metric metric, Date date) const
{
    std::shared_lock lock(mu_);
    auto it = series_.find({region_id, metric});
    if (it == series_.end()) {
        return std::nullopt;
    }
    return it->second.value_at(date);
}

std::vector<SeriesKey> SeriesStore::keys() const
{
    std::shared_lock lock(mu_);
    std::vector<SeriesKey> out;
    for (const auto& [key, s] : series_) {
        if (!s.points.empty()) {
            out.push_back(key);
        }
    }
    return out;
}

CompactTable SeriesStore::to_compact_table(std::span<const std::string> region_ids, Metric metric, Date from,
                                           Date to) const
{
    if (to < from) {
        throw Error(ErrorCode::EmptyDateRange, "date range " + from.iso() + ".." + to.iso() + " is empty");
    }
    for (const auto& id : region_ids) {
        require_region(id);
    }
    std::shared_lock lock(mu_);
    CompactTable table;
    for (Date d = from; d <= to; d = d + 1) {
        table.dates.push_back(d);
    }
    for (const auto& id : region_ids) {
        table.region_ids.push_back(id);
        auto& row = table.rows.emplace_back();
        row.reserve(table.dates.size());
        auto it = series_.find({id, metric});
        for (const auto& d : table.dates) {
            std::optional<std::int64_t> v;
            if (it != series_.end()) {
                v = it->second.value_at(d);
            }
            row.push_back(v.value_or(0));
        }
    }
    return table;
}

CompactTable SeriesStore::to_compact_table(Metric metric) const
{
    std::vector<std::string> ids;
    std::optional<Date> from;
    std::optional<Date> to;
    {
        std::shared_lock lock(mu_);
        for (const auto& [key, s] : series_) {
            if (key.metric != metric || s.points.empty()) {
                continue;
            }
            ids.push_back(key.region_id);
            from = from ? std::min(*from, s.points.begin()->first) : s.points.begin()->first;
            to = to ? std::max(*to, s.points.rbegin()->first) : s.points.rbegin()->first;
        }
    }
    if (ids.empty()) {
        return {};
    }
    return to_compact_table(ids, metric, *from, *to);
}

ActiveResult SeriesStore::derive_active(const std::string& region_id, Date date) const
{
    require_region(region_id);
    std::shared_lock lock(mu_);
    auto at = [&](Metric m) -> std::optional<std::int64_t> {
        auto it = series_.find({region_id, m});
        return it == series_.end() ? std::nullopt : it->second.value_at(date);
    };
    auto confirmed = at(Metric::Confirmed);
    if (!confirmed) {
        throw Error(ErrorCode::NoData, region_id + ": no confirmed count at " + date.iso());
    }
    auto deceased = at(Metric::Deceased).value_or(0);
    auto recovered = at(Metric::Recovered).value_or(0);
    auto active = *confirmed - deceased - recovered;
    if (active < 0) {
        return DataInconsistent{*confirmed, deceased, recovered};
    }
    return active;
}

std::vector<StatRow> SeriesStore::stat_rows(std::span<const std::string> region_ids, std::optional<Date> date) const
{
    std::vector<StatRow> rows;
    for (const auto& id : region_ids) {
        auto region = regions_.find(id);
        if (!region) {
            throw Error(ErrorCode::UnknownRegion, "unknown region: " + id);
        }
        std::shared_lock lock(mu_);
        auto at = [&](Metric m) -> std::optional<std::int64_t> {
            auto it = series_.find({id, m});
            if (it == series_.end() || it->second.points.empty()) {
                return std::nullopt;
            }
            return date ? it->second.value_at(*date) : it->second.latest()->value;
        };
        rows.push_back(make_stat_row(*region, at(Metric::Confirmed).value_or(0), at(Metric::Deceased).value_or(0),
                                     at(Metric::Recovered)));
    }
    return rows;
}

bool SeriesStore::add_case_record(CaseRecord record)
{
    record.validate();
    require_region(record.region_id);
    std::unique_lock lock(mu_);
    if (records_.count(record.record_id) != 0) {
        return false;
    }
    record_order_.push_back(record.record_id);
    records_.emplace(record.record_id, std::move(record));
    return true;
}

bool SeriesStore::has_case_record(const std::string& record_id) const
{
    std::shared_lock lock(mu_);
    return records_.count(record_id) != 0;
}

std::vector<CaseRecord> SeriesStore::case_records(std::optional<std::string> region_id) const
{
    std::shared_lock lock(mu_);
    std::vector<CaseRecord> out;
    for (const auto& id : record_order_) {
        const auto& r = records_.at(id);
        if (!region_id || r.region_id == *region_id) {
            out.push_back(r);
        }
    }
    return out;
}

std::string SeriesStore::canonical_dump() const
{
    std::shared_lock lock(mu_);
    nlohmann::json series = nlohmann::json::array();
    for (const auto& [key, s] : series_) {
        if (s.points.empty()) {
            continue;
        }
        nlohmann::json points = nlohmann::json::array();
        for (const auto& [date, p] : s.points) {
            points.push_back({{"date", date}, {"value", p.value}, {"provenance", p.provenance}});
        }
        series.push_back({{"region_id", key.region_id}, {"metric", key.metric}, {"points", std::move(points)}});
    }
    nlohmann::json records = nlohmann::json::array();
    for (const auto& id : record_order_) {
        records.push_back(records_.at(id));
    }
    return nlohmann::json{{"series", std::move(series)}, {"case_records", std::move(records)}}.dump();
}

std::string SeriesStore::digest() const { return sha256_hex(canonical_dump()); }

void SeriesStore::restore(std::string_view dump)
{
    auto doc = nlohmann::json::parse(dump);
    std::map<SeriesKey, CumulativeSeries> series;
    for (const auto& js : doc.at("series")) {
        CumulativeSeries s;
        s.region_id = js.at("region_id").get<std::string>();
        s.metric = js.at("metric").get<Metric>();
        require_region(s.region_id);
        for (const auto& p : js.at("points")) {
            s.points[p.at("date").get<Date>()] =
                SeriesPoint{p.at("value").get<std::int64_t>(), p.at("provenance").get<Provenance>()};
        }
        if (!s.is_monotonic()) {
            throw Error(ErrorCode::MonotonicityViolation, "stored series is not monotonic: " + s.region_id);
        }
        series.emplace(SeriesKey{s.region_id, s.metric}, std::move(s));
    }
    std::map<std::string, CaseRecord> records;
    std::vector<std::string> order;
    for (const auto& jr : doc.at("case_records")) {
        auto r = jr.get<CaseRecord>();
        order.push_back(r.record_id);
        records.emplace(r.record_id, std::move(r));
    }
    std::unique_lock lock(mu_);
    series_ = std::move(series);
    records_ = std::move(records);
    record_order_ = std::move(order);
}

} // namespace covidnet
