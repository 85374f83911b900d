#pragma once

#include "covidnet/region.hpp"
#include "covidnet/series.hpp"
#include "covidnet/time.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace covidnet {

/// How a source publishes: the whole revisable history, only the latest
/// totals, or individual patient/cluster rows.
enum class Paradigm { FullHistory, Snapshot, PerCase };
enum class PayloadFormat { Csv, Json };

std::string_view to_string(Paradigm p) noexcept;
Paradigm parse_paradigm(std::string_view text);
std::string_view to_string(PayloadFormat f) noexcept;
PayloadFormat parse_format(std::string_view text);

/// What a payload column means.
struct FieldRole {
    enum class Kind {
        RegionKey,
        Date,
        MetricValue, // wide layout: the column holds counts of `metric`
        MetricName,  // long layout: the column names the metric ...
        Value,       // ... and this one holds the count
        ClusterSize,
        RecordId,
        SourceRef, // pipe-separated URLs
        Summary,
        Demographic,
    };
    Kind kind = Kind::RegionKey;
    std::optional<Metric> metric;

    /// "region", "date", "metric:CONFIRMED", "metric_name", "value",
    /// "cluster_size", "record_id", "source_ref", "summary", "demographic".
    static FieldRole parse(std::string_view text);
    std::string str() const;

    bool operator==(const FieldRole&) const = default;
};

struct SourceDescriptor {
    std::string source_id;
    std::string scope_region;
    Paradigm paradigm = Paradigm::Snapshot;
    PayloadFormat format = PayloadFormat::Csv;
    std::map<std::string, FieldRole> field_map;
    /// Source-specific spellings of region keys mapped to region codes.
    std::map<std::string, std::string> region_aliases;
    std::chrono::seconds poll_interval{std::chrono::hours{2}};
    std::string timezone = "UTC";
    int reported_delay_days = 0;
    std::string endpoint;
    /// JSON payloads: key of the row array when the top level is an object.
    std::string json_root;
    /// PER_CASE rows count toward this metric unless a metric_name column says otherwise.
    Metric case_metric = Metric::Confirmed;
    /// SNAPSHOT sources: directory of dated archives ("YYYY-MM-DD.csv") for backfill.
    std::string archive_dir;

    void validate() const;
};

/// Loads {"sources": [...]} from JSON text; every descriptor is validated.
std::vector<SourceDescriptor> load_sources_json(std::string_view text);
std::vector<SourceDescriptor> load_sources_file(const std::filesystem::path& path);

struct PointObservation {
    std::string region_id;
    Metric metric = Metric::Confirmed;
    Date date;
    std::int64_t value = 0;

    bool operator==(const PointObservation&) const = default;
};

using Observation = std::variant<PointObservation, CaseRecord>;

struct FetchBatch {
    std::string source_id;
    Instant fetched_at{};
    std::vector<Observation> observations;
    std::string payload_digest;
    /// Region keys that matched no region in the source's scope. A batch
    /// with unmatched keys is partial; the matched rows remain usable.
    std::vector<std::string> unmatched_keys;

    bool partial() const { return !unmatched_keys.empty(); }
};

/// Maps raw CSV/JSON bytes through the descriptor's field map. Dates are
/// taken in the source's timezone and shifted back by reported_delay_days.
/// Throws EmptyPayload or MalformedPayload.
FetchBatch parse_payload(std::string_view raw, const SourceDescriptor& descriptor, const RegionTree& regions,
                         Instant fetched_at);

enum class ChangeKind { CommitPoint, ReplaceHistory };

/// A write the gate has to approve before it reaches the store.
struct ProposedChange {
    ChangeKind kind = ChangeKind::CommitPoint;
    std::string region_id;
    Metric metric = Metric::Confirmed;
    Paradigm paradigm = Paradigm::Snapshot;
    Provenance provenance;
    // CommitPoint
    Date date;
    std::int64_t value = 0;
    // ReplaceHistory
    std::vector<DatedValue> history;
    /// A stored historical point changed.
    bool historical_edit = false;
    /// Some value is lower than what is stored.
    bool decrease = false;

    /// Same target and payload; provenance and tags are ignored.
    bool same_payload(const ProposedChange& other) const;
};

struct IngestPlan {
    std::vector<ProposedChange> proposals;
    /// Case records new to the store (PER_CASE only).
    std::vector<CaseRecord> new_records;
    /// Duplicates detected by dedupe: (candidate id, existing id).
    std::vector<std::pair<std::string, std::string>> duplicates;
    std::vector<std::string> unknown_regions;
};

/// Turns a parsed batch into gate proposals, dropping the ones that match
/// what is already stored. Pure: reads the store, writes nothing.
IngestPlan plan_ingest(const FetchBatch& batch, const SourceDescriptor& descriptor, const SeriesStore& store,
                       const RegionTree& regions);

/// Gate entry point the ingestor routes proposals to.
using ProposalSink = std::function<void(const ProposedChange&, Instant now)>;

struct ArchivePayload {
    Date date;
    std::string bytes;
};

/// Applies batches: stores new case records, routes proposals to the sink,
/// and guards one-time backfills.
class Ingestor {
public:
    Ingestor(const RegionTree& regions, SeriesStore& store, ProposalSink sink);

    IngestPlan ingest(const FetchBatch& batch, const SourceDescriptor& descriptor, Instant now);

    /// Applies dated archives oldest-first through the normal ingest path.
    /// Throws InvalidSource (not SNAPSHOT), OutOfOrderArchive or
    /// AlreadyBackfilled; nothing is applied when it throws.
    std::vector<IngestPlan> backfill(const SourceDescriptor& descriptor, std::span<const ArchivePayload> archives,
                                     Instant now);

    bool backfilled(const std::string& source_id) const;
    std::vector<std::string> backfilled_sources() const;
    void mark_backfilled(const std::string& source_id);

private:
    const RegionTree& regions_;
    SeriesStore& store_;
    ProposalSink sink_;
    mutable std::mutex mu_;
    std::set<std::string> backfilled_;
};

/// Tracks last_polled_at per source and hands out due sources at most once
/// per interval.
class PollScheduler {
public:
    /// Sources whose interval has elapsed, most stale first; never-polled
    /// sources lead. In-flight sources are skipped.
    std::vector<SourceDescriptor> poll_due(std::span<const SourceDescriptor> sources, Instant now) const;

    /// poll_due plus marking the returned sources polled at `now` and in
    /// flight, atomically.
    std::vector<SourceDescriptor> claim_due(std::span<const SourceDescriptor> sources, Instant now);
    void complete(const std::string& source_id);

    void set_last_polled(const std::string& source_id, Instant at);
    std::optional<Instant> last_polled(const std::string& source_id) const;
    std::map<std::string, Instant> snapshot() const;

private:
    std::vector<SourceDescriptor> due_locked(std::span<const SourceDescriptor> sources, Instant now) const;

    mutable std::mutex mu_;
    std::map<std::string, Instant> last_polled_;
    std::set<std::string> in_flight_;
};

/// Reads a file path (relative paths resolved against base_dir) or does an
/// HTTP(S) GET. Non-200 responses and I/O failures throw FetchFailed.
std::string fetch_payload(const std::string& endpoint, const std::filesystem::path& base_dir,
                          std::chrono::seconds timeout = std::chrono::seconds{30});

} // namespace covidnet
