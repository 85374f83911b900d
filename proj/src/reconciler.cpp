#include "covidnet/reconciler.hpp"

#include "covidnet/error.hpp"
#include "covidnet/json_io.hpp"

#include <algorithm>
#include <cstdio>

namespace covidnet {

std::chrono::seconds ReconcilerConfig::window_for(const std::string& country) const
{
    auto it = country_windows.find(country);
    return it == country_windows.end() ? staleness_window : it->second;
}

std::string_view to_string(DiaryStatus s) noexcept
{
    switch (s) {
    case DiaryStatus::Open: return "OPEN";
    case DiaryStatus::Resolved: return "RESOLVED";
    case DiaryStatus::Persistent: return "PERSISTENT";
    }
    return "?";
}

DiaryStatus parse_diary_status(std::string_view text)
{
    for (auto s : {DiaryStatus::Open, DiaryStatus::Resolved, DiaryStatus::Persistent}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw Error(ErrorCode::Validation, "unknown diary status: " + std::string(text));
}

Reconciler::Reconciler(RegionTree& regions, const SeriesStore& store, QualityGate& gate, ReconcilerConfig config)
    : regions_(regions), store_(store), gate_(gate), config_(std::move(config))
{
}

std::string Reconciler::country_of(const std::string& region_id) const
{
    auto r = regions_.resolve(region_id);
    while (r.parent_id) {
        r = regions_.resolve(*r.parent_id);
    }
    return r.id;
}

RegionTotal Reconciler::total_of(const std::string& region_id, Metric metric, Date date, Rollup* out) const
{
    RegionTotal t;
    if (auto s = store_.series(region_id, metric)) {
        auto it = s->points.upper_bound(date);
        if (it != s->points.begin()) {
            --it;
            t.own = it->second.value;
            t.updated_at = it->second.provenance.fetched_at;
        }
    }
    bool any_child = false;
    for (const auto& child : regions_.children(region_id)) {
        if (child.is_unassigned) {
            continue;
        }
        auto ct = total_of(child.id, metric, date, out);
        if (!ct.has_data) {
            continue;
        }
        any_child = true;
        t.children_sum += ct.total;
        if (ct.updated_at && (!t.updated_at || *ct.updated_at > *t.updated_at)) {
            t.updated_at = ct.updated_at;
        }
    }
    if (any_child) {
        t.from_children = true;
        t.has_data = true;
        t.unassigned = t.own ? std::max<std::int64_t>(0, *t.own - t.children_sum) : 0;
        t.child_lead = t.own && t.children_sum > *t.own;
        t.total = t.children_sum + t.unassigned;
    }
    else {
        t.has_data = t.own.has_value();
        t.total = t.own.value_or(0);
    }
    if (out) {
        (*out)[region_id] = t;
    }
    return t;
}

Rollup Reconciler::finest_granularity_rollup(const std::string& country, Metric metric, Date date) const
{
    regions_.resolve(country);
    Rollup out;
    total_of(country, metric, date, &out);
    return out;
}

CrossLevelResult Reconciler::cross_level_check(const std::string& parent, Metric metric, Date date,
                                               std::optional<std::chrono::seconds> staleness_window) const
{
    auto region = regions_.resolve(parent);
    std::optional<SeriesPoint> own;
    if (auto s = store_.series(parent, metric)) {
        auto it = s->points.upper_bound(date);
        if (it != s->points.begin()) {
            own = std::prev(it)->second;
        }
    }
    if (!own) {
        throw Error(ErrorCode::NoParentReport, parent + " has no " + std::string(to_string(metric)) +
                                                   " report at " + date.iso());
    }
    std::vector<ChildStamp> stamps;
    std::int64_t sum = 0;
    for (const auto& child : regions_.children(parent)) {
        if (child.is_unassigned) {
            continue;
        }
        auto ct = total_of(child.id, metric, date, nullptr);
        if (!ct.has_data) {
            continue;
        }
        sum += ct.total;
        stamps.push_back({child.id, ct.total, ct.updated_at.value_or(Instant{})});
    }
    if (stamps.empty()) {
        throw Error(ErrorCode::NoData, parent + " has no child with data at " + date.iso());
    }
    if (own->value >= sum) {
        return Consistent{own->value - sum};
    }
    auto window = staleness_window.value_or(config_.window_for(country_of(parent)));
    const auto parent_time = own->provenance.fetched_at;
    bool children_lead = std::all_of(stamps.begin(), stamps.end(), [&](const ChildStamp& c) {
        return c.updated_at >= parent_time && c.updated_at - parent_time <= window;
    });
    if (children_lead) {
        return ChildLead{sum - own->value};
    }
    return Discrepancy{parent, metric, date, own->value, sum, own->value - sum, parent_time, std::move(stamps)};
}

std::int64_t Reconciler::compute_unassigned(const std::string& parent, Metric metric, Date date, Instant now)
{
    auto own = store_.value_at(parent, metric, date);
    if (!own) {
        throw Error(ErrorCode::NoParentReport, parent + " has no " + std::string(to_string(metric)) +
                                                   " report at " + date.iso());
    }
    std::int64_t sum = 0;
    for (const auto& child : regions_.children(parent)) {
        if (!child.is_unassigned) {
            sum += total_of(child.id, metric, date, nullptr).total;
        }
    }
    const std::int64_t unassigned = std::max<std::int64_t>(0, *own - sum);
    auto bucket = regions_.ensure_unassigned(parent);
    if (auto s = store_.series(bucket.id, metric)) {
        if (auto it = s->points.find(date); it != s->points.end() && it->second.value == unassigned) {
            return unassigned;
        }
    }
    ProposedChange p;
    p.kind = ChangeKind::CommitPoint;
    p.region_id = bucket.id;
    p.metric = metric;
    p.paradigm = Paradigm::Snapshot;
    p.provenance = Provenance{"reconciler", now};
    p.date = date;
    p.value = unassigned;
    gate_.submit(p, now);
    return unassigned;
}

DiaryEntry Reconciler::diary_upsert(const Discrepancy& d, Instant now)
{
    std::lock_guard lock(mu_);
    for (auto& e : diary_) {
        if (e.status != DiaryStatus::Resolved && e.discrepancy.parent_region == d.parent_region &&
            e.discrepancy.metric == d.metric) {
            e.discrepancy = d;
            e.last_seen = std::max(e.last_seen, now);
            if (e.last_seen - e.first_seen > config_.diary_horizon) {
                e.status = DiaryStatus::Persistent;
            }
            return e;
        }
    }
    char id[32];
    std::snprintf(id, sizeof id, "D-%06llu", static_cast<unsigned long long>(next_entry_++));
    DiaryEntry e;
    e.entry_id = id;
    e.discrepancy = d;
    e.first_seen = now;
    e.last_seen = now;
    diary_.push_back(e);
    return e;
}

void Reconciler::revisit_locked(DiaryEntry& e, Instant now)
{
    const auto& d = e.discrepancy;
    Date date = d.date;
    if (auto s = store_.series(d.parent_region, d.metric); s && s->latest()) {
        date = std::max(date, s->latest()->date);
    }
    try {
        auto r = cross_level_check(d.parent_region, d.metric, date);
        if (auto* still = std::get_if<Discrepancy>(&r)) {
            e.discrepancy = *still;
            e.last_seen = std::max(e.last_seen, now);
            e.status = now - e.first_seen > config_.diary_horizon ? DiaryStatus::Persistent : DiaryStatus::Open;
            return;
        }
        e.status = DiaryStatus::Resolved;
        e.notes.push_back({now, std::holds_alternative<Consistent>(r) ? "consistent on revisit"
                                                                       : "children lead within staleness window"});
    }
    catch (const Error& err) {
        if (err.code() != ErrorCode::NoParentReport && err.code() != ErrorCode::NoData) {
            throw;
        }
        e.status = DiaryStatus::Resolved;
        e.notes.push_back({now, std::string("no longer comparable: ") + err.what()});
    }
}

std::vector<DiaryEntry> Reconciler::periodic_revisit(Instant now)
{
    std::lock_guard lock(mu_);
    std::vector<DiaryEntry> out;
    for (auto& e : diary_) {
        if (e.status == DiaryStatus::Resolved) {
            continue;
        }
        revisit_locked(e, now);
        out.push_back(e);
    }
    return out;
}

DiaryEntry Reconciler::add_note(const std::string& entry_id, std::string text, Instant now)
{
    std::lock_guard lock(mu_);
    for (auto& e : diary_) {
        if (e.entry_id == entry_id) {
            e.notes.push_back({now, std::move(text)});
            return e;
        }
    }
    throw Error(ErrorCode::NotFound, "unknown diary entry: " + entry_id);
}

SweepReport Reconciler::sweep(const std::string& country, Metric metric, Date date, Instant now)
{
    std::lock_guard sweep_lock(sweep_mu_);
    SweepReport report;
    std::vector<std::string> parents{country};
    for (std::size_t i = 0; i < parents.size(); ++i) {
        for (const auto& child : regions_.children(parents[i])) {
            if (!child.is_unassigned && child.level != Level::Subdivision) {
                parents.push_back(child.id);
            }
        }
    }
    for (const auto& parent : parents) {
        if (!store_.value_at(parent, metric, date)) {
            continue;
        }
        CrossLevelResult result;
        try {
            result = cross_level_check(parent, metric, date);
        }
        catch (const Error& e) {
            if (e.code() == ErrorCode::NoData) {
                continue;
            }
            throw;
        }
        report.checked.push_back(parent);
        if (auto* d = std::get_if<Discrepancy>(&result)) {
            report.discrepancies.push_back(diary_upsert(*d, now));
        }
        report.unassigned[parent] = compute_unassigned(parent, metric, date, now);
    }
    return report;
}

std::vector<DiaryEntry> Reconciler::diary(std::optional<DiaryStatus> status) const
{
    std::lock_guard lock(mu_);
    std::vector<DiaryEntry> out;
    for (const auto& e : diary_) {
        if (!status || e.status == *status) {
            out.push_back(e);
        }
    }
    return out;
}

std::string Reconciler::dump_state() const
{
    std::lock_guard lock(mu_);
    return nlohmann::json{{"next_entry", next_entry_}, {"entries", diary_}}.dump();
}

void Reconciler::restore_state(std::string_view dump)
{
    auto doc = nlohmann::json::parse(dump);
    auto entries = doc.at("entries").get<std::vector<DiaryEntry>>();
    std::lock_guard lock(mu_);
    diary_ = std::move(entries);
    next_entry_ = doc.at("next_entry").get<std::uint64_t>();
}

} // namespace covidnet
