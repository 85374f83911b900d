#include "covidnet/ingest.hpp"

#include "covidnet/digest.hpp"
#include "covidnet/error.hpp"
#include "covidnet/gate.hpp"
#include "covidnet/json_io.hpp"
#include "csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace covidnet {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::int64_t parse_count(std::string_view text, std::string_view column)
{
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || v < 0) {
        throw Error(ErrorCode::MalformedPayload,
                    "column '" + std::string(column) + "': not a non-negative integer: '" + std::string(text) + "'");
    }
    return v;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto pos = s.find(sep, start);
        auto part = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!part.empty()) {
            out.push_back(std::move(part));
        }
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

using Row = std::vector<std::pair<std::string, std::string>>;

std::vector<Row> rows_from_csv(std::string_view raw)
{
    auto table = csv::parse(raw);
    if (table.size() < 2) {
        throw Error(ErrorCode::EmptyPayload, "CSV payload has no data rows");
    }
    const auto& header = table.front();
    std::vector<Row> rows;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& cells = table[i];
        if (cells.size() == 1 && trim(cells[0]).empty()) {
            continue;
        }
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::MalformedPayload, "CSV row " + std::to_string(i + 1) + " has " +
                                                         std::to_string(cells.size()) + " fields, header has " +
                                                         std::to_string(header.size()));
        }
        Row row;
        for (std::size_t c = 0; c < header.size(); ++c) {
            row.emplace_back(trim(header[c]), trim(cells[c]));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw Error(ErrorCode::EmptyPayload, "CSV payload has no data rows");
    }
    return rows;
}

std::vector<Row> rows_from_json(std::string_view raw, const std::string& root)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(raw);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedPayload, std::string("JSON payload: ") + e.what());
    }
    const nlohmann::json* list = &doc;
    if (!root.empty()) {
        if (!doc.is_object() || !doc.contains(root)) {
            throw Error(ErrorCode::MalformedPayload, "JSON payload has no '" + root + "' member");
        }
        list = &doc[root];
    }
    if (!list->is_array()) {
        throw Error(ErrorCode::MalformedPayload, "JSON payload rows must be an array");
    }
    if (list->empty()) {
        throw Error(ErrorCode::EmptyPayload, "JSON payload has no rows");
    }
    std::vector<Row> rows;
    for (const auto& el : *list) {
        if (!el.is_object()) {
            throw Error(ErrorCode::MalformedPayload, "JSON payload rows must be objects");
        }
        Row row;
        for (const auto& [key, value] : el.items()) {
            std::string text;
            if (value.is_string()) {
                text = value.get<std::string>();
            }
            else if (value.is_number_integer()) {
                text = value.dump();
            }
            else if (value.is_number_float()) {
                double d = value.get<double>();
                if (d != static_cast<double>(static_cast<std::int64_t>(d))) {
                    throw Error(ErrorCode::MalformedPayload, "non-integral count in '" + key + "'");
                }
                text = std::to_string(static_cast<std::int64_t>(d));
            }
            else if (value.is_array()) {
                for (const auto& item : value) {
                    text += (text.empty() ? "" : "|") + (item.is_string() ? item.get<std::string>() : item.dump());
                }
            }
            else if (!value.is_null()) {
                text = value.dump();
            }
            row.emplace_back(key, trim(text));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Resolves a source's region key: alias table, then exact code, then a
/// case-insensitive name match inside the source's scope.
class RegionMatcher {
public:
    RegionMatcher(const SourceDescriptor& d, const RegionTree& regions) : d_(d), regions_(regions)
    {
        for (const auto& r : regions.all()) {
            if (regions.is_within(r.id, d.scope_region)) {
                names_.emplace(lower(r.name_en), r.id);
                names_.emplace(lower(r.name_local), r.id);
            }
        }
    }

    std::optional<std::string> match(const std::string& key) const
    {
        if (auto it = d_.region_aliases.find(key); it != d_.region_aliases.end()) {
            return in_scope(it->second);
        }
        if (regions_.contains(key)) {
            return in_scope(key);
        }
        if (auto it = names_.find(lower(key)); it != names_.end()) {
            return it->second;
        }
        return std::nullopt;
    }

private:
    std::optional<std::string> in_scope(const std::string& code) const
    {
        if (regions_.is_within(code, d_.scope_region)) {
            return code;
        }
        return std::nullopt;
    }

    const SourceDescriptor& d_;
    const RegionTree& regions_;
    std::multimap<std::string, std::string> names_;
};

} // namespace

std::string_view to_string(Paradigm p) noexcept
{
    switch (p) {
    case Paradigm::FullHistory: return "FULL_HISTORY";
    case Paradigm::Snapshot: return "SNAPSHOT";
    case Paradigm::PerCase: return "PER_CASE";
    }
    return "?";
}

Paradigm parse_paradigm(std::string_view text)
{
    for (auto p : {Paradigm::FullHistory, Paradigm::Snapshot, Paradigm::PerCase}) {
        if (to_string(p) == text) {
            return p;
        }
    }
    throw Error(ErrorCode::InvalidSource, "unknown paradigm: " + std::string(text));
}

std::string_view to_string(PayloadFormat f) noexcept { return f == PayloadFormat::Csv ? "CSV" : "JSON"; }

PayloadFormat parse_format(std::string_view text)
{
    auto u = lower(text);
    if (u == "csv") return PayloadFormat::Csv;
    if (u == "json") return PayloadFormat::Json;
    throw Error(ErrorCode::InvalidSource, "unknown payload format: " + std::string(text));
}

FieldRole FieldRole::parse(std::string_view text)
{
    using K = Kind;
    if (text.rfind("metric:", 0) == 0) {
        return {K::MetricValue, parse_metric(text.substr(7))};
    }
    static const std::pair<std::string_view, K> table[] = {
        {"region", K::RegionKey},       {"date", K::Date},           {"metric_name", K::MetricName},
        {"value", K::Value},            {"cluster_size", K::ClusterSize}, {"record_id", K::RecordId},
        {"source_ref", K::SourceRef},   {"summary", K::Summary},     {"demographic", K::Demographic},
    };
    for (const auto& [name, kind] : table) {
        if (name == text) {
            return {kind, std::nullopt};
        }
    }
    throw Error(ErrorCode::InvalidSource, "unknown field role: " + std::string(text));
}

std::string FieldRole::str() const
{
    switch (kind) {
    case Kind::RegionKey: return "region";
    case Kind::Date: return "date";
    case Kind::MetricValue: return "metric:" + std::string(to_string(*metric));
    case Kind::MetricName: return "metric_name";
    case Kind::Value: return "value";
    case Kind::ClusterSize: return "cluster_size";
    case Kind::RecordId: return "record_id";
    case Kind::SourceRef: return "source_ref";
    case Kind::Summary: return "summary";
    case Kind::Demographic: return "demographic";
    }
    return "?";
}

void SourceDescriptor::validate() const
{
    auto fail = [&](const std::string& why) { throw Error(ErrorCode::InvalidSource, source_id + ": " + why); };
    if (source_id.empty()) {
        throw Error(ErrorCode::InvalidSource, "source_id is empty");
    }
    if (poll_interval <= std::chrono::seconds{0}) {
        fail("poll_interval must be positive");
    }
    if (reported_delay_days < 0) {
        fail("reported_delay_days must be non-negative");
    }
    auto has = [&](FieldRole::Kind k) {
        return std::any_of(field_map.begin(), field_map.end(), [k](const auto& kv) { return kv.second.kind == k; });
    };
    if (!has(FieldRole::Kind::Date)) {
        fail("field_map must map a date column");
    }
    if (!has(FieldRole::Kind::RegionKey)) {
        fail("field_map must map a region column");
    }
    if (paradigm != Paradigm::PerCase) {
        bool wide = has(FieldRole::Kind::MetricValue);
        bool long_form = has(FieldRole::Kind::MetricName) && has(FieldRole::Kind::Value);
        if (!wide && !long_form) {
            fail("field_map must cover at least one metric");
        }
    }
    if (scope_region.empty()) {
        fail("scope_region is empty");
    }
}

std::vector<SourceDescriptor> load_sources_json(std::string_view text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("source registry: ") + e.what());
    }
    const auto& list = doc.is_array() ? doc : doc.value("sources", nlohmann::json::array());
    std::vector<SourceDescriptor> out;
    for (const auto& js : list) {
        try {
            SourceDescriptor d;
            d.source_id = js.at("source_id").get<std::string>();
            d.scope_region = js.at("scope_region").get<std::string>();
            d.paradigm = parse_paradigm(js.at("paradigm").get<std::string>());
            d.format = parse_format(js.value("format", std::string("CSV")));
            for (const auto& [col, role] : js.at("field_map").items()) {
                d.field_map.emplace(col, FieldRole::parse(role.get<std::string>()));
            }
            d.region_aliases = js.value("region_aliases", std::map<std::string, std::string>{});
            d.poll_interval = std::chrono::seconds{
                static_cast<std::int64_t>(js.value("poll_interval_minutes", 120.0) * 60.0)};
            d.timezone = js.value("timezone", std::string("UTC"));
            d.reported_delay_days = js.value("reported_delay_days", 0);
            d.endpoint = js.value("endpoint", std::string{});
            d.json_root = js.value("json_root", std::string{});
            if (js.contains("case_metric")) {
                d.case_metric = parse_metric(js["case_metric"].get<std::string>());
            }
            d.archive_dir = js.value("archive_dir", std::string{});
            d.validate();
            out.push_back(std::move(d));
        }
        catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("source registry record: ") + e.what());
        }
    }
    return out;
}

std::vector<SourceDescriptor> load_sources_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open source registry: " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_sources_json(ss.str());
}

FetchBatch parse_payload(std::string_view raw, const SourceDescriptor& d, const RegionTree& regions,
                         Instant fetched_at)
{
    if (trim(raw).empty()) {
        throw Error(ErrorCode::EmptyPayload, d.source_id + ": empty payload");
    }
    auto rows = d.format == PayloadFormat::Csv ? rows_from_csv(raw) : rows_from_json(raw, d.json_root);

    FetchBatch batch;
    batch.source_id = d.source_id;
    batch.fetched_at = fetched_at;
    batch.payload_digest = sha256_hex(raw);

    RegionMatcher matcher(d, regions);
    std::map<std::string, int> seen_rows;

    for (const auto& row : rows) {
        std::optional<std::string> region_key;
        std::optional<std::string> date_text;
        std::optional<Metric> metric_name;
        std::optional<std::string> value_text;
        std::vector<std::pair<Metric, std::string>> metric_values;
        std::int64_t cluster = 1;
        std::string record_id;
        std::string summary;
        std::vector<std::string> refs;
        std::map<std::string, std::string> demographics;

        for (const auto& [column, cell] : row) {
            auto role = d.field_map.find(column);
            if (role == d.field_map.end()) {
                continue;
            }
            switch (role->second.kind) {
            case FieldRole::Kind::RegionKey: region_key = cell; break;
            case FieldRole::Kind::Date: date_text = cell; break;
            case FieldRole::Kind::MetricValue: metric_values.emplace_back(*role->second.metric, cell); break;
            case FieldRole::Kind::MetricName:
                try {
                    metric_name = parse_metric(cell);
                }
                catch (const Error&) {
                    throw Error(ErrorCode::MalformedPayload, "unknown metric name '" + cell + "'");
                }
                break;
            case FieldRole::Kind::Value: value_text = cell; break;
            case FieldRole::Kind::ClusterSize:
                if (!cell.empty()) {
                    cluster = parse_count(cell, column);
                }
                break;
            case FieldRole::Kind::RecordId: record_id = cell; break;
            case FieldRole::Kind::SourceRef: refs = split(cell, '|'); break;
            case FieldRole::Kind::Summary: summary = cell; break;
            case FieldRole::Kind::Demographic:
                if (!cell.empty()) {
                    demographics.emplace(column, cell);
                }
                break;
            }
        }
        if (!region_key || region_key->empty() || !date_text || date_text->empty()) {
            throw Error(ErrorCode::MalformedPayload, d.source_id + ": row without region or date");
        }
        auto region = matcher.match(*region_key);
        if (!region) {
            if (std::find(batch.unmatched_keys.begin(), batch.unmatched_keys.end(), *region_key) ==
                batch.unmatched_keys.end()) {
                batch.unmatched_keys.push_back(*region_key);
            }
            continue;
        }
        Date date = parse_source_date(*date_text, d.timezone) - d.reported_delay_days;

        if (d.paradigm == Paradigm::PerCase) {
            CaseRecord r;
            r.region_id = *region;
            r.report_date = date;
            r.cluster_size = cluster;
            r.metric = metric_name.value_or(d.case_metric);
            r.demographics = std::move(demographics);
            r.summary = std::move(summary);
            r.source_refs = refs.empty() ? std::vector<std::string>{d.endpoint.empty() ? d.source_id : d.endpoint}
                                         : std::move(refs);
            r.origin = d.source_id;
            if (record_id.empty()) {
                std::string canon;
                for (const auto& [column, cell] : row) {
                    canon += column + "=" + cell + "\n";
                }
                auto base = d.source_id + ":" + sha256_hex(canon).substr(0, 16);
                r.record_id = base + "#" + std::to_string(seen_rows[base]++);
            }
            else {
                r.record_id = d.source_id + ":" + record_id;
            }
            if (r.cluster_size < 1) {
                throw Error(ErrorCode::MalformedPayload, r.record_id + ": cluster_size must be >= 1");
            }
            batch.observations.emplace_back(std::move(r));
            continue;
        }

        for (const auto& [metric, cell] : metric_values) {
            if (cell.empty()) {
                continue;
            }
            batch.observations.emplace_back(PointObservation{*region, metric, date, parse_count(cell, "metric")});
        }
        if (metric_name && value_text && !value_text->empty()) {
            batch.observations.emplace_back(PointObservation{*region, *metric_name, date, parse_count(*value_text, "value")});
        }
    }
    return batch;
}

bool ProposedChange::same_payload(const ProposedChange& o) const
{
    if (kind != o.kind || region_id != o.region_id || metric != o.metric) {
        return false;
    }
    if (kind == ChangeKind::CommitPoint) {
        return date == o.date && value == o.value;
    }
    return history == o.history;
}

IngestPlan plan_ingest(const FetchBatch& batch, const SourceDescriptor& d, const SeriesStore& store,
                       const RegionTree& regions)
{
    IngestPlan plan;
    const Provenance provenance{batch.source_id, batch.fetched_at};
    auto note_unknown = [&](const std::string& region) {
        if (std::find(plan.unknown_regions.begin(), plan.unknown_regions.end(), region) == plan.unknown_regions.end()) {
            plan.unknown_regions.push_back(region);
        }
    };

    if (d.paradigm == Paradigm::PerCase) {
        std::map<SeriesKey, bool> affected;
        for (const auto& obs : batch.observations) {
            const auto* rec = std::get_if<CaseRecord>(&obs);
            if (!rec) {
                continue;
            }
            if (!regions.contains(rec->region_id)) {
                note_unknown(rec->region_id);
                continue;
            }
            bool known = store.has_case_record(rec->record_id) ||
                         std::any_of(plan.new_records.begin(), plan.new_records.end(),
                                     [&](const CaseRecord& n) { return n.record_id == rec->record_id; });
            if (known) {
                continue;
            }
            // Records from the same feed are distinct by the feed's own ids;
            // dedupe only against what arrived through other channels.
            std::vector<CaseRecord> others;
            for (auto& e : store.case_records(rec->region_id)) {
                if (e.origin != rec->origin) {
                    others.push_back(std::move(e));
                }
            }
            if (auto dup = dedupe_case(*rec, others); dup.duplicate) {
                plan.duplicates.emplace_back(rec->record_id, dup.existing_id);
                continue;
            }
            plan.new_records.push_back(*rec);
            affected[{rec->region_id, rec->metric}] = true;
        }
        for (const auto& [key, _] : affected) {
            auto all = store.case_records(key.region_id);
            std::erase_if(all, [&](const CaseRecord& r) { return r.metric != key.metric; });
            for (const auto& n : plan.new_records) {
                if (n.region_id == key.region_id && n.metric == key.metric) {
                    all.push_back(n);
                }
            }
            auto cumulative = aggregate_case_records(all, regions)[key];
            auto stored = store.series(key.region_id, key.metric);
            for (const auto& point : cumulative) {
                std::optional<std::int64_t> exact;
                std::optional<std::int64_t> filled;
                if (stored) {
                    if (auto it = stored->points.find(point.date); it != stored->points.end()) {
                        exact = it->second.value;
                    }
                    filled = stored->value_at(point.date);
                }
                if (exact == point.value) {
                    continue;
                }
                ProposedChange p;
                p.kind = ChangeKind::CommitPoint;
                p.region_id = key.region_id;
                p.metric = key.metric;
                p.paradigm = d.paradigm;
                p.provenance = provenance;
                p.date = point.date;
                p.value = point.value;
                p.decrease = filled && point.value < *filled;
                p.historical_edit = exact.has_value();
                plan.proposals.push_back(std::move(p));
            }
        }
        return plan;
    }

    // Point observations, last one wins per (region, metric, date).
    std::map<SeriesKey, std::map<Date, std::int64_t>> grouped;
    for (const auto& obs : batch.observations) {
        const auto* p = std::get_if<PointObservation>(&obs);
        if (!p) {
            continue;
        }
        if (!regions.contains(p->region_id)) {
            note_unknown(p->region_id);
            continue;
        }
        grouped[{p->region_id, p->metric}][p->date] = p->value;
    }

    for (const auto& [key, points] : grouped) {
        auto stored = store.series(key.region_id, key.metric);
        if (d.paradigm == Paradigm::FullHistory) {
            ProposedChange p;
            p.kind = ChangeKind::ReplaceHistory;
            p.region_id = key.region_id;
            p.metric = key.metric;
            p.paradigm = d.paradigm;
            p.provenance = provenance;
            for (const auto& [date, value] : points) {
                p.history.push_back({date, value});
            }
            if (stored && stored->values() == p.history) {
                continue;
            }
            if (stored) {
                for (const auto& [date, sp] : stored->points) {
                    auto it = points.find(date);
                    if (it == points.end() || it->second != sp.value) {
                        p.historical_edit = true;
                    }
                    if (it != points.end() && it->second < sp.value) {
                        p.decrease = true;
                    }
                }
            }
            plan.proposals.push_back(std::move(p));
            continue;
        }
        for (const auto& [date, value] : points) {
            std::optional<std::int64_t> exact;
            std::optional<std::int64_t> filled;
            std::optional<Date> last;
            if (stored) {
                if (auto it = stored->points.find(date); it != stored->points.end()) {
                    exact = it->second.value;
                }
                filled = stored->value_at(date);
                if (auto l = stored->latest()) {
                    last = l->date;
                }
            }
            if (exact == value) {
                continue;
            }
            ProposedChange p;
            p.kind = ChangeKind::CommitPoint;
            p.region_id = key.region_id;
            p.metric = key.metric;
            p.paradigm = d.paradigm;
            p.provenance = provenance;
            p.date = date;
            p.value = value;
            p.decrease = filled && value < *filled;
            p.historical_edit = exact.has_value() || (last && date < *last);
            plan.proposals.push_back(std::move(p));
        }
    }
    return plan;
}

// Ingestor ------------------------------------------------------------------

Ingestor::Ingestor(const RegionTree& regions, SeriesStore& store, ProposalSink sink)
    : regions_(regions), store_(store), sink_(std::move(sink))
{
}

IngestPlan Ingestor::ingest(const FetchBatch& batch, const SourceDescriptor& descriptor, Instant now)
{
    auto plan = plan_ingest(batch, descriptor, store_, regions_);
    for (const auto& r : plan.new_records) {
        store_.add_case_record(r);
    }
    for (const auto& p : plan.proposals) {
        sink_(p, now);
    }
    return plan;
}

std::vector<IngestPlan> Ingestor::backfill(const SourceDescriptor& descriptor, std::span<const ArchivePayload> archives,
                                           Instant now)
{
    if (descriptor.paradigm != Paradigm::Snapshot) {
        throw Error(ErrorCode::InvalidSource, descriptor.source_id + ": backfill applies to SNAPSHOT sources only");
    }
    if (backfilled(descriptor.source_id)) {
        throw Error(ErrorCode::AlreadyBackfilled, descriptor.source_id + " has already been backfilled");
    }
    for (std::size_t i = 1; i < archives.size(); ++i) {
        if (archives[i].date <= archives[i - 1].date) {
            throw Error(ErrorCode::OutOfOrderArchive, descriptor.source_id + ": archive " + archives[i].date.iso() +
                                                          " does not follow " + archives[i - 1].date.iso());
        }
    }
    std::vector<FetchBatch> batches;
    for (const auto& a : archives) {
        batches.push_back(parse_payload(a.bytes, descriptor, regions_, now));
    }
    std::vector<IngestPlan> plans;
    for (const auto& b : batches) {
        plans.push_back(ingest(b, descriptor, now));
    }
    mark_backfilled(descriptor.source_id);
    return plans;
}

bool Ingestor::backfilled(const std::string& source_id) const
{
    std::lock_guard lock(mu_);
    return backfilled_.count(source_id) != 0;
}

std::vector<std::string> Ingestor::backfilled_sources() const
{
    std::lock_guard lock(mu_);
    return {backfilled_.begin(), backfilled_.end()};
}

void Ingestor::mark_backfilled(const std::string& source_id)
{
    std::lock_guard lock(mu_);
    backfilled_.insert(source_id);
}

// PollScheduler -------------------------------------------------------------

std::vector<SourceDescriptor> PollScheduler::due_locked(std::span<const SourceDescriptor> sources, Instant now) const
{
    std::vector<std::pair<std::optional<Instant>, const SourceDescriptor*>> due;
    for (const auto& s : sources) {
        if (in_flight_.count(s.source_id) != 0) {
            continue;
        }
        auto it = last_polled_.find(s.source_id);
        if (it == last_polled_.end()) {
            due.emplace_back(std::nullopt, &s);
        }
        else if (now - it->second >= s.poll_interval) {
            due.emplace_back(it->second, &s);
        }
    }
    // Never polled first, then oldest poll first; ties by id.
    std::stable_sort(due.begin(), due.end(), [](const auto& a, const auto& b) {
        if (a.first.has_value() != b.first.has_value()) {
            return !a.first.has_value();
        }
        if (a.first != b.first) {
            return *a.first < *b.first;
        }
        return a.second->source_id < b.second->source_id;
    });
    std::vector<SourceDescriptor> out;
    for (const auto& [_, s] : due) {
        out.push_back(*s);
    }
    return out;
}

std::vector<SourceDescriptor> PollScheduler::poll_due(std::span<const SourceDescriptor> sources, Instant now) const
{
    std::lock_guard lock(mu_);
    return due_locked(sources, now);
}

std::vector<SourceDescriptor> PollScheduler::claim_due(std::span<const SourceDescriptor> sources, Instant now)
{
    std::lock_guard lock(mu_);
    auto due = due_locked(sources, now);
    for (const auto& s : due) {
        last_polled_[s.source_id] = now;
        in_flight_.insert(s.source_id);
    }
    return due;
}

void PollScheduler::complete(const std::string& source_id)
{
    std::lock_guard lock(mu_);
    in_flight_.erase(source_id);
}

void PollScheduler::set_last_polled(const std::string& source_id, Instant at)
{
    std::lock_guard lock(mu_);
    last_polled_[source_id] = at;
}

std::optional<Instant> PollScheduler::last_polled(const std::string& source_id) const
{
    std::lock_guard lock(mu_);
    auto it = last_polled_.find(source_id);
    return it == last_polled_.end() ? std::nullopt : std::optional(it->second);
}

std::map<std::string, Instant> PollScheduler::snapshot() const
{
    std::lock_guard lock(mu_);
    return last_polled_;
}

} // namespace covidnet
