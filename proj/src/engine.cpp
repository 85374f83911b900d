#include "covidnet/engine.hpp"

#include "covidnet/error.hpp"
#include "covidnet/json_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

namespace covidnet {

namespace {

using nlohmann::json;

thread_local std::vector<GateOutcome>* tl_outcomes = nullptr;

/// Collects the gate outcomes produced on this thread while in scope.
class OutcomeCapture {
public:
    explicit OutcomeCapture(std::vector<GateOutcome>& sink) : prev_(tl_outcomes) { tl_outcomes = &sink; }
    ~OutcomeCapture() { tl_outcomes = prev_; }
    OutcomeCapture(const OutcomeCapture&) = delete;
    OutcomeCapture& operator=(const OutcomeCapture&) = delete;

private:
    std::vector<GateOutcome>* prev_;
};

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        }
        out << text;
        if (!out.flush()) {
            throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

json inline_or_file(const json& j, const std::filesystem::path& base_dir, const char* what)
{
    if (j.is_string()) {
        auto path = std::filesystem::path(j.get<std::string>());
        if (path.is_relative()) {
            path = base_dir / path;
        }
        try {
            return json::parse(read_file(path));
        }
        catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string(what) + " file " + path.string() + ": " + e.what());
        }
    }
    if (j.is_object()) {
        return j;
    }
    throw Error(ErrorCode::InvalidConfig, std::string(what) + " must be a path or an object");
}

std::chrono::seconds hours(const json& j, const char* key, std::chrono::seconds fallback)
{
    if (!j.contains(key)) {
        return fallback;
    }
    return std::chrono::seconds{static_cast<std::int64_t>(j.at(key).get<double>() * 3600)};
}

std::string country_of(const RegionTree& regions, std::string id)
{
    while (true) {
        auto r = regions.find(id);
        if (!r || !r->parent_id) {
            return id;
        }
        id = *r->parent_id;
    }
}

} // namespace

// EngineConfig --------------------------------------------------------------

EngineConfig EngineConfig::from_json(const json& j, const std::filesystem::path& base_dir)
{
    if (!j.is_object()) {
        throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    }
    EngineConfig c;
    c.base_dir = base_dir;
    try {
        if (j.contains("regions")) {
            c.regions = inline_or_file(j["regions"], base_dir, "regions");
        }
        if (j.contains("sources")) {
            c.sources = inline_or_file(j["sources"], base_dir, "sources");
        }
        if (j.contains("store") && !j["store"].is_null()) {
            std::filesystem::path store = j["store"].get<std::string>();
            c.store_dir = store.is_relative() ? base_dir / store : store;
        }
        if (j.contains("gate")) {
            c.gate = gate_config_from_json(j["gate"]);
        }
        if (j.contains("reconciler")) {
            const auto& r = j["reconciler"];
            c.reconciler.staleness_window = hours(r, "staleness_window_hours", c.reconciler.staleness_window);
            c.reconciler.diary_horizon = hours(r, "diary_horizon_hours", c.reconciler.diary_horizon);
            if (r.contains("country_windows_hours")) {
                for (const auto& [country, h] : r["country_windows_hours"].items()) {
                    c.reconciler.country_windows[country] =
                        std::chrono::seconds{static_cast<std::int64_t>(h.get<double>() * 3600)};
                }
            }
        }
        c.reconcile_after_ingest = j.value("reconcile_after_ingest", true);
        if (j.contains("api")) {
            const auto& a = j["api"];
            c.api.bind = a.value("bind", c.api.bind);
            c.api.port = a.value("port", c.api.port);
            c.api.token = a.value("token", c.api.token);
            if (a.contains("static_dir")) {
                std::filesystem::path s = a["static_dir"].get<std::string>();
                c.api.static_dir = (s.is_relative() ? base_dir / s : s).string();
            }
        }
    }
    catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    c.gate.validate();
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& file)
{
    json j;
    try {
        j = json::parse(read_file(file));
    }
    catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, file.string() + ": " + e.what());
    }
    auto c = from_json(j, file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
    c.apply_env();
    return c;
}

void EngineConfig::apply_env()
{
    if (const char* port = std::getenv("COVIDNET_PORT"); port && *port) {
        try {
            api.port = std::stoi(port);
        }
        catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, std::string("COVIDNET_PORT is not a number: ") + port);
        }
    }
    if (const char* token = std::getenv("COVIDNET_TOKEN"); token && *token) {
        api.token = token;
    }
}

std::size_t IngestReport::count(GateOutcome::Action a) const
{
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [&](const GateOutcome& o) { return o.action == a; }));
}

// Engine --------------------------------------------------------------------

Engine::Engine(EngineConfig config) : config_(std::move(config))
{
    config_.gate.validate();
    regions_ = std::make_unique<RegionTree>();
    if (!config_.regions.empty()) {
        regions_->load_json(config_.regions.dump());
    }
    if (!config_.sources.empty()) {
        sources_ = load_sources_json(config_.sources.dump());
    }
    for (const auto& s : sources_) {
        if (!regions_->contains(s.scope_region)) {
            throw Error(ErrorCode::InvalidSource, s.source_id + ": unknown scope region " + s.scope_region);
        }
    }
    store_ = std::make_unique<SeriesStore>(*regions_);
    if (config_.store_dir.empty()) {
        journal_ = std::make_unique<Journal>();
    }
    else {
        std::filesystem::create_directories(config_.store_dir);
        journal_ = std::make_unique<Journal>(config_.store_dir / "journal.jsonl");
    }
    gate_ = std::make_unique<QualityGate>(config_.gate, *regions_, *store_, *journal_);
    reconciler_ = std::make_unique<Reconciler>(*regions_, *store_, *gate_, config_.reconciler);
    issues_ = std::make_unique<IssueDesk>(*regions_);
    ingestor_ = std::make_unique<Ingestor>(*regions_, *store_, [this](const ProposedChange& p, Instant now) {
        auto outcome = gate_->submit(p, now);
        if (tl_outcomes) {
            tl_outcomes->push_back(std::move(outcome));
        }
    });
    load_state();
}

Engine::~Engine() = default;

const SourceDescriptor& Engine::source(const std::string& source_id) const
{
    for (const auto& s : sources_) {
        if (s.source_id == source_id) {
            return s;
        }
    }
    throw Error(ErrorCode::UnknownSource, "unknown source: " + source_id);
}

IngestReport Engine::run_ingest(const FetchBatch& batch, const SourceDescriptor& d, Instant now)
{
    IngestReport report;
    report.source_id = d.source_id;
    report.observations = batch.observations.size();
    report.unmatched_keys = batch.unmatched_keys;
    IngestPlan plan;
    {
        OutcomeCapture capture(report.outcomes);
        plan = ingestor_->ingest(batch, d, now);
    }
    report.new_records = plan.new_records.size();
    report.duplicates = plan.duplicates.size();
    after_ingest(plan, report.outcomes, now);
    return report;
}

IngestReport Engine::ingest_payload(const std::string& source_id, std::string_view raw, Instant now)
{
    const auto& d = source(source_id);
    auto batch = parse_payload(raw, d, *regions_, now);
    auto report = run_ingest(batch, d, now);
    save();
    return report;
}

// outcomes[i] belongs to plan.proposals[i]. A re-proposal of a pending hold
// changes nothing, so it does not trigger a sweep.
void Engine::after_ingest(const IngestPlan& plan, std::span<const GateOutcome> outcomes, Instant now)
{
    if (!config_.reconcile_after_ingest) {
        return;
    }
    std::map<std::pair<std::string, Metric>, Date> touched;
    for (std::size_t i = 0; i < plan.proposals.size(); ++i) {
        if (i < outcomes.size() && outcomes[i].action == GateOutcome::Action::AlreadyHeld) {
            continue;
        }
        const auto& p = plan.proposals[i];
        std::vector<Date> dates;
        if (p.kind == ChangeKind::CommitPoint) {
            dates.push_back(p.date);
        }
        else {
            for (const auto& v : p.history) {
                dates.push_back(v.date);
            }
        }
        auto key = std::pair{country_of(*regions_, p.region_id), p.metric};
        for (auto d : dates) {
            auto [it, inserted] = touched.emplace(key, d);
            if (!inserted && it->second < d) {
                it->second = d;
            }
        }
    }
    for (const auto& [key, date] : touched) {
        reconciler_->sweep(key.first, key.second, date, now);
    }
}

std::vector<IngestReport> Engine::poll_once(Instant now)
{
    auto due = scheduler_.claim_due(sources_, now);
    std::vector<std::future<IngestReport>> running;
    running.reserve(due.size());
    for (const auto& d : due) {
        running.push_back(std::async(std::launch::async, [this, d, now] {
            IngestReport report;
            report.source_id = d.source_id;
            try {
                auto raw = fetch_payload(d.endpoint, config_.base_dir);
                auto batch = parse_payload(raw, d, *regions_, now);
                report = run_ingest(batch, d, now);
            }
            catch (const std::exception& e) {
                report.error = e.what();
            }
            scheduler_.complete(d.source_id);
            return report;
        }));
    }
    std::vector<IngestReport> reports;
    for (auto& f : running) {
        reports.push_back(f.get());
    }
    save();
    return reports;
}

std::vector<IngestReport> Engine::backfill(const std::string& source_id, Instant now)
{
    const auto& d = source(source_id);
    if (d.archive_dir.empty()) {
        throw Error(ErrorCode::InvalidSource, source_id + " has no archive_dir");
    }
    std::filesystem::path dir(d.archive_dir);
    if (dir.is_relative()) {
        dir = config_.base_dir / dir;
    }
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::Io, "archive dir not found: " + dir.string());
    }
    std::vector<ArchivePayload> archives;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        auto name = entry.path().filename().string();
        if (name.size() < 10) {
            continue;
        }
        Date date;
        try {
            date = Date::parse(name.substr(0, 10));
        }
        catch (const Error&) {
            continue;
        }
        archives.push_back({date, read_file(entry.path())});
    }
    std::sort(archives.begin(), archives.end(),
              [](const ArchivePayload& a, const ArchivePayload& b) { return a.date < b.date; });

    std::vector<GateOutcome> outcomes;
    std::vector<IngestPlan> plans;
    {
        OutcomeCapture capture(outcomes);
        plans = ingestor_->backfill(d, archives, now);
    }
    std::vector<IngestReport> reports;
    std::size_t next = 0;
    for (const auto& plan : plans) {
        IngestReport r;
        r.source_id = source_id;
        r.new_records = plan.new_records.size();
        r.duplicates = plan.duplicates.size();
        r.unmatched_keys = plan.unknown_regions;
        for (std::size_t i = 0; i < plan.proposals.size() && next < outcomes.size(); ++i) {
            r.outcomes.push_back(outcomes[next++]);
        }
        r.observations = plan.proposals.size();
        after_ingest(plan, r.outcomes, now);
        reports.push_back(std::move(r));
    }
    save();
    return reports;
}

std::optional<ProposedChange> Engine::refetch(const HoldTicket& t)
{
    const auto& p = t.proposed;
    const SourceDescriptor* d = nullptr;
    for (const auto& s : sources_) {
        if (s.source_id == p.provenance.source_id) {
            d = &s;
        }
    }
    if (!d || d->endpoint.empty()) {
        return std::nullopt;
    }
    IngestPlan plan;
    Instant fetched{};
    try {
        fetched = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
        auto batch = parse_payload(fetch_payload(d->endpoint, config_.base_dir), *d, *regions_, fetched);
        plan = plan_ingest(batch, *d, *store_, *regions_);
    }
    catch (const std::exception&) {
        return std::nullopt;
    }
    for (const auto& q : plan.proposals) {
        if (q.kind == p.kind && q.region_id == p.region_id && q.metric == p.metric &&
            (q.kind == ChangeKind::ReplaceHistory || q.date == p.date)) {
            return q;
        }
    }
    // The source now serves what is already stored.
    ProposedChange current = p;
    current.provenance = Provenance{d->source_id, fetched};
    if (p.kind == ChangeKind::CommitPoint && p.paradigm == Paradigm::PerCase) {
        // Held aggregates are not in the series, but their records are.
        auto records = store_->case_records(p.region_id);
        std::erase_if(records, [&](const CaseRecord& r) { return r.metric != p.metric; });
        CumulativeSeries s;
        for (const auto& v : aggregate_case_records(records, *regions_)[SeriesKey{p.region_id, p.metric}]) {
            s.points[v.date] = SeriesPoint{v.value, {}};
        }
        current.value = s.value_at(p.date).value_or(0);
    }
    else if (p.kind == ChangeKind::CommitPoint) {
        current.value = store_->value_at(p.region_id, p.metric, p.date).value_or(0);
    }
    else {
        auto s = store_->series(p.region_id, p.metric);
        current.history = s ? s->values() : std::vector<DatedValue>{};
    }
    return current;
}

std::vector<HoldTicket> Engine::expire_holds(Instant now)
{
    auto changed = gate_->expire_holds(now, [this](const HoldTicket& t) { return refetch(t); });
    if (!changed.empty()) {
        save();
    }
    return changed;
}

HoldTicket Engine::resolve_hold(const std::string& ticket_id, Resolution decision, const std::string& operator_id,
                                Instant now)
{
    auto t = gate_->resolve_hold(ticket_id, decision, operator_id, now);
    save();
    return t;
}

IssueReport Engine::submit_issue(IssueCategory category, std::optional<std::string> region_id,
                                 std::vector<std::string> links, std::string body, Instant now)
{
    auto r = issues_->submit(category, std::move(region_id), std::move(links), std::move(body), now);
    save();
    return r;
}

IssueReport Engine::assign_issue(const std::string& issue_id, const std::string& operator_id)
{
    auto r = issues_->assign(issue_id, operator_id);
    save();
    return r;
}

IssueReport Engine::resolve_issue(const std::string& issue_id, IssueState outcome, std::string note,
                                  std::vector<CaseRecord> records, Instant now)
{
    auto issue = issues_->get(issue_id);
    if (issue.state != IssueState::Assigned) {
        throw Error(ErrorCode::InvalidTransition,
                    issue_id + ": cannot resolve an issue in state " + std::string(to_string(issue.state)));
    }
    if (note.empty()) {
        throw Error(ErrorCode::Validation, "a resolution note is required");
    }
    if (!records.empty() && outcome != IssueState::Resolved) {
        throw Error(ErrorCode::Validation, "only a RESOLVED issue can create records");
    }
    std::vector<std::string> linked;
    if (!records.empty()) {
        SourceDescriptor d;
        d.source_id = "issue-desk";
        d.paradigm = Paradigm::PerCase;
        FetchBatch batch;
        batch.source_id = d.source_id;
        batch.fetched_at = now;
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto& r = records[i];
            if (r.record_id.empty()) {
                r.record_id = "issue:" + issue_id + "#" + std::to_string(i);
            }
            r.origin = "issue:" + issue_id;
            if (r.source_refs.empty()) {
                r.source_refs = issue.links;
            }
            if (!regions_->contains(r.region_id)) {
                throw Error(ErrorCode::UnknownRegion, "unknown region: " + r.region_id);
            }
            r.validate();
            batch.observations.emplace_back(r);
        }
        IngestPlan plan;
        std::vector<GateOutcome> outcomes;
        {
            OutcomeCapture capture(outcomes);
            plan = ingestor_->ingest(batch, d, now);
        }
        for (const auto& r : plan.new_records) {
            linked.push_back(r.record_id);
        }
        for (const auto& [candidate, existing] : plan.duplicates) {
            linked.push_back(existing);
        }
        after_ingest(plan, outcomes, now);
    }
    auto r = issues_->resolve(issue_id, outcome, std::move(note), std::move(linked));
    save();
    return r;
}

ValidationReport Engine::validate(const std::string& source_id, std::string_view raw) const
{
    const auto& d = source(source_id);
    auto batch = parse_payload(raw, d, *regions_, Instant{});
    ValidationReport report;
    report.unmatched_keys = batch.unmatched_keys;

    std::vector<PointObservation> rows;
    if (d.paradigm == Paradigm::PerCase) {
        std::vector<CaseRecord> records;
        for (const auto& o : batch.observations) {
            if (const auto* r = std::get_if<CaseRecord>(&o); r && !store_->has_case_record(r->record_id)) {
                records.push_back(*r);
            }
        }
        std::set<std::string> touched;
        for (const auto& r : records) {
            touched.insert(r.region_id);
        }
        for (const auto& region : touched) {
            auto existing = store_->case_records(region);
            records.insert(records.end(), existing.begin(), existing.end());
        }
        for (const auto& [key, series] : aggregate_case_records(records, *regions_)) {
            for (const auto& v : series) {
                rows.push_back({key.region_id, key.metric, v.date, v.value});
            }
        }
    }
    else {
        for (const auto& o : batch.observations) {
            if (const auto* p = std::get_if<PointObservation>(&o)) {
                rows.push_back(*p);
            }
        }
    }

    // Stored series overlaid with the rows seen so far.
    std::map<SeriesKey, std::map<Date, std::int64_t>> view;
    for (const auto& row : rows) {
        SeriesKey key{row.region_id, row.metric};
        auto it = view.find(key);
        if (it == view.end()) {
            std::map<Date, std::int64_t> points;
            if (auto s = store_->series(row.region_id, row.metric)) {
                for (const auto& v : s->values()) {
                    points[v.date] = v.value;
                }
            }
            it = view.emplace(key, std::move(points)).first;
        }
        auto& points = it->second;
        std::int64_t prev = 0;
        if (auto lb = points.lower_bound(row.date); lb != points.begin()) {
            prev = std::prev(lb)->second;
        }
        ValidationRow out;
        out.region_id = row.region_id;
        out.metric = row.metric;
        out.date = row.date;
        out.prev_value = prev;
        out.new_value = row.value;
        out.level = regions_->resolve(row.region_id).level;
        out.decision = deployment_check(prev, row.value, out.level, gate_->config());
        report.rows.push_back(std::move(out));
        points[row.date] = row.value;
    }
    return report;
}

std::vector<SweepReport> Engine::reconcile(Instant now)
{
    std::vector<SweepReport> reports;
    for (const auto& root : regions_->roots()) {
        for (auto metric : kAllMetrics) {
            auto s = store_->series(root.id, metric);
            if (!s || !s->latest()) {
                continue;
            }
            reports.push_back(reconciler_->sweep(root.id, metric, s->latest()->date, now));
        }
    }
    reconciler_->periodic_revisit(now);
    save();
    return reports;
}

void Engine::save()
{
    if (config_.store_dir.empty()) {
        return;
    }
    std::lock_guard lock(save_mu_);
    json last_polled = json::object();
    for (const auto& [id, at] : scheduler_.snapshot()) {
        last_polled[id] = format_instant(at);
    }
    json unassigned = json::array();
    for (const auto& r : regions_->all()) {
        if (r.is_unassigned && r.parent_id) {
            unassigned.push_back(*r.parent_id);
        }
    }
    json state{
        {"version", 1},
        {"store", json::parse(store_->canonical_dump())},
        {"gate", json::parse(gate_->dump_state())},
        {"reconciler", json::parse(reconciler_->dump_state())},
        {"issues", json::parse(issues_->dump_state())},
        {"backfilled", ingestor_->backfilled_sources()},
        {"last_polled", std::move(last_polled)},
        {"unassigned_parents", std::move(unassigned)},
    };
    write_file_atomic(config_.store_dir / "state.json", state.dump(1));
}

void Engine::load_state()
{
    if (config_.store_dir.empty()) {
        return;
    }
    auto path = config_.store_dir / "state.json";
    if (!std::filesystem::exists(path)) {
        return;
    }
    json state;
    try {
        state = json::parse(read_file(path));
    }
    catch (const json::exception& e) {
        throw Error(ErrorCode::Io, path.string() + ": " + e.what());
    }
    const auto unassigned = state.value("unassigned_parents", json::array());
    for (const auto& parent : unassigned) {
        regions_->ensure_unassigned(parent.get<std::string>());
    }
    store_->restore(state.at("store").dump());
    gate_->restore_state(state.at("gate").dump());
    reconciler_->restore_state(state.at("reconciler").dump());
    issues_->restore_state(state.at("issues").dump());
    const auto backfilled = state.value("backfilled", json::array());
    for (const auto& id : backfilled) {
        ingestor_->mark_backfilled(id.get<std::string>());
    }
    const auto last_polled = state.value("last_polled", json::object());
    for (const auto& [id, at] : last_polled.items()) {
        scheduler_.set_last_polled(id, parse_instant(at.get<std::string>()));
    }
}

} // namespace covidnet
