#pragma once

#include "covidnet/gate.hpp"
#include "covidnet/region.hpp"
#include "covidnet/series.hpp"

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace covidnet {

struct ReconcilerConfig {
    /// How long children may lead their parent before it counts as a
    /// discrepancy.
    std::chrono::seconds staleness_window{std::chrono::hours{24}};
    std::map<std::string, std::chrono::seconds> country_windows;
    /// OPEN diary entries older than this become PERSISTENT.
    std::chrono::seconds diary_horizon{std::chrono::hours{24 * 7}};

    std::chrono::seconds window_for(const std::string& country) const;
};

struct ChildStamp {
    std::string region_id;
    std::int64_t value = 0;
    Instant updated_at{};
};

struct Discrepancy {
    std::string parent_region;
    Metric metric = Metric::Confirmed;
    Date date;
    std::int64_t parent_value = 0;
    std::int64_t children_sum = 0;
    /// parent_value - children_sum; never zero.
    std::int64_t delta = 0;
    Instant parent_updated_at{};
    std::vector<ChildStamp> staleness_note;
};

struct Consistent {
    std::int64_t unassigned = 0;
};

/// Children sum above the parent, but they were all updated after the
/// parent and within the staleness window.
struct ChildLead {
    std::int64_t delta = 0;
};

using CrossLevelResult = std::variant<Consistent, ChildLead, Discrepancy>;

enum class DiaryStatus { Open, Resolved, Persistent };

std::string_view to_string(DiaryStatus s) noexcept;
DiaryStatus parse_diary_status(std::string_view text);

struct DiaryNote {
    Instant at{};
    std::string text;
};

struct DiaryEntry {
    std::string entry_id;
    Discrepancy discrepancy;
    Instant first_seen{};
    Instant last_seen{};
    DiaryStatus status = DiaryStatus::Open;
    std::vector<DiaryNote> notes;
};

/// Display figure for one region under the finest-granularity rule: when
/// any child has data, the total is the children's sum plus the unassigned
/// remainder of the region's own report, and the own report never adds on
/// top.
struct RegionTotal {
    std::int64_t total = 0;
    std::optional<std::int64_t> own;
    std::int64_t children_sum = 0;
    std::int64_t unassigned = 0;
    bool from_children = false;
    bool child_lead = false;
    bool has_data = false;
    std::optional<Instant> updated_at;
};

using Rollup = std::map<std::string, RegionTotal>;

struct SweepReport {
    std::vector<std::string> checked;
    std::vector<DiaryEntry> discrepancies;
    std::map<std::string, std::int64_t> unassigned;
};

class Reconciler {
public:
    Reconciler(RegionTree& regions, const SeriesStore& store, QualityGate& gate, ReconcilerConfig config = {});

    /// Throws NoParentReport when the parent has no value at `date`, NoData
    /// when no (non-unassigned) child has data.
    CrossLevelResult cross_level_check(const std::string& parent, Metric metric, Date date,
                                       std::optional<std::chrono::seconds> staleness_window = std::nullopt) const;

    /// max(0, parent - children), written to the parent's unassigned bucket
    /// through the gate.
    std::int64_t compute_unassigned(const std::string& parent, Metric metric, Date date, Instant now);

    DiaryEntry diary_upsert(const Discrepancy& discrepancy, Instant now);
    std::vector<DiaryEntry> periodic_revisit(Instant now);
    DiaryEntry add_note(const std::string& entry_id, std::string text, Instant now);

    /// Display totals for every region below (and including) `country`.
    Rollup finest_granularity_rollup(const std::string& country, Metric metric, Date date) const;

    /// Checks every parent under `country`, records discrepancies and
    /// refreshes unassigned buckets. One sweep runs at a time.
    SweepReport sweep(const std::string& country, Metric metric, Date date, Instant now);

    std::vector<DiaryEntry> diary(std::optional<DiaryStatus> status = std::nullopt) const;

    std::string dump_state() const;
    void restore_state(std::string_view dump);

    const ReconcilerConfig& config() const { return config_; }

private:
    RegionTotal total_of(const std::string& region_id, Metric metric, Date date, Rollup* out) const;
    std::string country_of(const std::string& region_id) const;
    void revisit_locked(DiaryEntry& entry, Instant now);

    RegionTree& regions_;
    const SeriesStore& store_;
    QualityGate& gate_;
    ReconcilerConfig config_;
    mutable std::mutex mu_;
    std::mutex sweep_mu_;
    std::vector<DiaryEntry> diary_;
    std::uint64_t next_entry_ = 1;
};

} // namespace covidnet
