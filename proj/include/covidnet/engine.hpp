#pragma once

#include "covidnet/gate.hpp"
#include "covidnet/ingest.hpp"
#include "covidnet/issues.hpp"
#include "covidnet/journal.hpp"
#include "covidnet/reconciler.hpp"
#include "covidnet/region.hpp"
#include "covidnet/series.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covidnet {

struct ApiConfig {
    std::string bind = "127.0.0.1";
    int port = 8080;
    /// Bearer token for mutating endpoints. Empty disables writes entirely.
    std::string token;
    /// Optional directory served at "/" (the review console bundle).
    std::string static_dir;
};

/// Everything the engine needs. "regions" and "sources" may be file paths
/// (relative to the config file) or inline objects.
struct EngineConfig {
    std::filesystem::path base_dir = ".";
    nlohmann::json regions = nlohmann::json::object();
    nlohmann::json sources = nlohmann::json::object();
    /// Empty: in-memory only.
    std::filesystem::path store_dir;
    GateConfig gate;
    ReconcilerConfig reconciler;
    ApiConfig api;
    /// Run a reconciliation sweep over the touched countries after each ingest.
    bool reconcile_after_ingest = true;

    /// Reads a JSON config file and applies COVIDNET_PORT / COVIDNET_TOKEN.
    /// Throws InvalidConfig or Io.
    static EngineConfig load(const std::filesystem::path& file);
    static EngineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    void apply_env();
};

struct IngestReport {
    std::string source_id;
    std::size_t observations = 0;
    std::vector<std::string> unmatched_keys;
    std::size_t new_records = 0;
    std::size_t duplicates = 0;
    std::vector<GateOutcome> outcomes;
    std::optional<std::string> error;

    std::size_t count(GateOutcome::Action a) const;
};

/// One payload row as the pre-deployment check sees it.
struct ValidationRow {
    std::string region_id;
    Metric metric = Metric::Confirmed;
    Date date;
    std::int64_t prev_value = 0;
    std::int64_t new_value = 0;
    Level level = Level::Country;
    GateDecision decision;
};

struct ValidationReport {
    std::vector<ValidationRow> rows;
    std::vector<std::string> unmatched_keys;
};

/// Owns one of each module and wires them together: ingestion feeds the
/// gate, the gate commits to the store, the reconciler sweeps after
/// ingests, and every mutation is persisted when a store dir is set.
class Engine {
public:
    explicit Engine(EngineConfig config);
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;
    ~Engine();

    const EngineConfig& config() const { return config_; }
    RegionTree& regions() { return *regions_; }
    SeriesStore& store() { return *store_; }
    QualityGate& gate() { return *gate_; }
    Reconciler& reconciler() { return *reconciler_; }
    IssueDesk& issues() { return *issues_; }
    Ingestor& ingestor() { return *ingestor_; }
    PollScheduler& scheduler() { return scheduler_; }
    Journal& journal() { return *journal_; }
    const std::vector<SourceDescriptor>& sources() const { return sources_; }
    /// Throws UnknownSource.
    const SourceDescriptor& source(const std::string& source_id) const;

    IngestReport ingest_payload(const std::string& source_id, std::string_view raw, Instant now);

    /// Fetches every due source concurrently and ingests what came back.
    /// Fetch failures are reported per source and do not stop the others.
    std::vector<IngestReport> poll_once(Instant now);

    /// Replays the source's dated archive files.
    std::vector<IngestReport> backfill(const std::string& source_id, Instant now);

    /// Gate expiry with a live refetch through the ticket's source.
    std::vector<HoldTicket> expire_holds(Instant now);

    HoldTicket resolve_hold(const std::string& ticket_id, Resolution decision, const std::string& operator_id,
                            Instant now);

    IssueReport submit_issue(IssueCategory category, std::optional<std::string> region_id,
                             std::vector<std::string> links, std::string body, Instant now);
    IssueReport assign_issue(const std::string& issue_id, const std::string& operator_id);
    /// Records created from the issue go through dedupe and the gate like
    /// any per-case feed; the ones that survive dedupe are linked.
    IssueReport resolve_issue(const std::string& issue_id, IssueState outcome, std::string note,
                              std::vector<CaseRecord> records, Instant now);

    /// Dry run: every row against the rules, with prev taken from the store
    /// overlaid by the payload's earlier rows. Never mutates anything.
    ValidationReport validate(const std::string& source_id, std::string_view raw) const;

    std::vector<SweepReport> reconcile(Instant now);

    /// Writes state.json under store_dir (no-op without one).
    void save();

private:
    void load_state();
    std::optional<ProposedChange> refetch(const HoldTicket& ticket);
    void after_ingest(const IngestPlan& plan, std::span<const GateOutcome> outcomes, Instant now);
    IngestReport run_ingest(const FetchBatch& batch, const SourceDescriptor& d, Instant now);

    EngineConfig config_;
    std::unique_ptr<RegionTree> regions_;
    std::vector<SourceDescriptor> sources_;
    std::unique_ptr<SeriesStore> store_;
    std::unique_ptr<Journal> journal_;
    std::unique_ptr<QualityGate> gate_;
    std::unique_ptr<Reconciler> reconciler_;
    std::unique_ptr<IssueDesk> issues_;
    std::unique_ptr<Ingestor> ingestor_;
    PollScheduler scheduler_;
    std::mutex save_mu_;
};

} // namespace covidnet
