#include "covidnet/json_io.hpp"

#include "covidnet/error.hpp"

namespace covidnet {

using nlohmann::json;

void to_json(json& j, const Date& d) { j = d.iso(); }
void from_json(const json& j, Date& d) { d = Date::parse(j.get<std::string>()); }

void to_json(json& j, const Metric& m) { j = std::string(to_string(m)); }
void from_json(const json& j, Metric& m) { m = parse_metric(j.get<std::string>()); }

void to_json(json& j, const Region& r)
{
    j = json{{"code", r.id},
             {"name_en", r.name_en},
             {"name_local", r.name_local},
             {"level", std::string(to_string(r.level))},
             {"parent", r.parent_id ? json(*r.parent_id) : json(nullptr)},
             {"population", r.population ? json(*r.population) : json(nullptr)},
             {"unassigned", r.is_unassigned}};
    if (r.health_dept_contact) {
        j["contact"] = *r.health_dept_contact;
    }
}

void from_json(const json& j, Region& r)
{
    r.id = j.at("code").get<std::string>();
    r.name_en = j.value("name_en", r.id);
    r.name_local = j.value("name_local", r.name_en);
    r.level = parse_level(j.at("level").get<std::string>());
    r.parent_id = j.contains("parent") && !j["parent"].is_null()
                      ? std::optional(j["parent"].get<std::string>())
                      : std::nullopt;
    r.population = j.contains("population") && !j["population"].is_null()
                       ? std::optional(j["population"].get<std::int64_t>())
                       : std::nullopt;
    r.is_unassigned = j.value("unassigned", false);
    r.health_dept_contact = j.contains("contact") && !j["contact"].is_null()
                                ? std::optional(j["contact"].get<std::string>())
                                : std::nullopt;
}

void to_json(json& j, const Provenance& p)
{
    j = json{{"source", p.source_id}, {"fetched_at", format_instant(p.fetched_at)}};
}

void from_json(const json& j, Provenance& p)
{
    p.source_id = j.at("source").get<std::string>();
    p.fetched_at = parse_instant(j.at("fetched_at").get<std::string>());
}

void to_json(json& j, const DatedValue& v) { j = json{{"date", v.date}, {"value", v.value}}; }

void from_json(const json& j, DatedValue& v)
{
    v.date = j.at("date").get<Date>();
    v.value = j.at("value").get<std::int64_t>();
}

void to_json(json& j, const CaseRecord& r)
{
    j = json{{"record_id", r.record_id},     {"region_id", r.region_id},
             {"report_date", r.report_date}, {"cluster_size", r.cluster_size},
             {"metric", r.metric},           {"demographics", r.demographics},
             {"summary", r.summary},         {"source_refs", r.source_refs},
             {"origin", r.origin}};
}

void from_json(const json& j, CaseRecord& r)
{
    r.record_id = j.value("record_id", std::string{});
    r.region_id = j.at("region_id").get<std::string>();
    r.report_date = j.at("report_date").get<Date>();
    r.cluster_size = j.value("cluster_size", std::int64_t{1});
    r.metric = j.contains("metric") ? j["metric"].get<Metric>() : Metric::Confirmed;
    r.demographics = j.value("demographics", std::map<std::string, std::string>{});
    r.summary = j.value("summary", std::string{});
    r.source_refs = j.value("source_refs", std::vector<std::string>{});
    r.origin = j.value("origin", std::string{});
}

json rational_json(const Rational& r)
{
    return json{{"exact", std::to_string(r.numerator()) + "/" + std::to_string(r.denominator())},
                {"decimal", static_cast<double>(r.numerator()) / static_cast<double>(r.denominator())}};
}

void to_json(json& j, const StatRow& r)
{
    auto opt_rational = [](const std::optional<Rational>& v) { return v ? rational_json(*v) : json(nullptr); };
    j = json{{"region_id", r.region_id},
             {"confirmed", r.confirmed},
             {"deceased", r.deceased},
             {"recovered", r.recovered ? json(*r.recovered) : json(nullptr)},
             {"confirmed_per_million", opt_rational(r.confirmed_per_million)},
             {"deceased_per_million", opt_rational(r.deceased_per_million)},
             {"fatality_rate", opt_rational(r.fatality_rate)},
             {"health_dept_contact", r.health_dept_contact ? json(*r.health_dept_contact) : json(nullptr)}};
}

} // namespace covidnet

namespace covidnet {

using nlohmann::json;

void to_json(json& j, const ProposedChange& p)
{
    j = json{{"kind", p.kind == ChangeKind::CommitPoint ? "point" : "history"},
             {"region_id", p.region_id},
             {"metric", p.metric},
             {"paradigm", std::string(to_string(p.paradigm))},
             {"provenance", p.provenance},
             {"historical_edit", p.historical_edit},
             {"decrease", p.decrease}};
    if (p.kind == ChangeKind::CommitPoint) {
        j["date"] = p.date;
        j["value"] = p.value;
    }
    else {
        j["history"] = p.history;
    }
}

void from_json(const json& j, ProposedChange& p)
{
    p.kind = j.at("kind").get<std::string>() == "point" ? ChangeKind::CommitPoint : ChangeKind::ReplaceHistory;
    p.region_id = j.at("region_id").get<std::string>();
    p.metric = j.at("metric").get<Metric>();
    p.paradigm = parse_paradigm(j.at("paradigm").get<std::string>());
    p.provenance = j.at("provenance").get<Provenance>();
    p.historical_edit = j.value("historical_edit", false);
    p.decrease = j.value("decrease", false);
    if (p.kind == ChangeKind::CommitPoint) {
        p.date = j.at("date").get<Date>();
        p.value = j.at("value").get<std::int64_t>();
    }
    else {
        p.history = j.at("history").get<std::vector<DatedValue>>();
    }
}

namespace {

json rules_json(const std::vector<GateRule>& rules)
{
    json out = json::array();
    for (auto r : rules) {
        out.push_back(to_string(r));
    }
    return out;
}

} // namespace

void to_json(json& j, const HoldTicket& t)
{
    j = json{{"ticket_id", t.ticket_id},
             {"region_id", t.region_id},
             {"metric", t.metric},
             {"proposed", t.proposed},
             {"prev_value", t.prev_value},
             {"triggered_rules", rules_json(t.triggered_rules)},
             {"created_at", format_instant(t.created_at)},
             {"expires_at", format_instant(t.expires_at)},
             {"state", std::string(to_string(t.state))},
             {"resolved_by", t.resolved_by ? json(*t.resolved_by) : json(nullptr)},
             {"resolved_at", t.resolved_at ? json(format_instant(*t.resolved_at)) : json(nullptr)}};
}

void from_json(const json& j, HoldTicket& t)
{
    t.ticket_id = j.at("ticket_id").get<std::string>();
    t.region_id = j.at("region_id").get<std::string>();
    t.metric = j.at("metric").get<Metric>();
    t.proposed = j.at("proposed").get<ProposedChange>();
    t.prev_value = j.at("prev_value").get<std::int64_t>();
    t.triggered_rules.clear();
    for (const auto& r : j.at("triggered_rules")) {
        t.triggered_rules.push_back(parse_gate_rule(r.get<std::string>()));
    }
    t.created_at = parse_instant(j.at("created_at").get<std::string>());
    t.expires_at = parse_instant(j.at("expires_at").get<std::string>());
    t.state = parse_ticket_state(j.at("state").get<std::string>());
    t.resolved_by = j["resolved_by"].is_null() ? std::nullopt : std::optional(j["resolved_by"].get<std::string>());
    t.resolved_at = j["resolved_at"].is_null()
                        ? std::nullopt
                        : std::optional(parse_instant(j["resolved_at"].get<std::string>()));
}

void to_json(json& j, const GateDecision& d)
{
    j = json{{"decision", std::string(to_string(d.kind))}, {"rules", rules_json(d.rules)}};
    if (d.ticket_id) {
        j["ticket"] = *d.ticket_id;
    }
}

Rational parse_rational(const json& j)
{
    if (j.is_number_integer()) {
        return Rational(j.get<std::int64_t>());
    }
    if (j.is_string()) {
        auto s = j.get<std::string>();
        auto slash = s.find('/');
        if (slash != std::string::npos) {
            return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
        }
        return parse_rational(json::parse(s));
    }
    if (j.is_number_float()) {
        // Decimal literals from config files: take them to 1e-6.
        auto scaled = static_cast<std::int64_t>(j.get<double>() * 1'000'000.0 + 0.5);
        return Rational(scaled, 1'000'000);
    }
    throw Error(ErrorCode::InvalidConfig, "expected a ratio, got " + j.dump());
}

GateConfig gate_config_from_json(const json& j)
{
    GateConfig c;
    auto hours = [](const json& v) {
        return std::chrono::seconds{static_cast<std::int64_t>(v.get<double>() * 3600.0)};
    };
    try {
        if (j.contains("jump_ratio")) c.jump_ratio = parse_rational(j["jump_ratio"]);
        if (j.contains("jump_floor")) c.jump_floor = j["jump_floor"].get<std::int64_t>();
        if (j.contains("hold_window_hours")) c.hold_window = hours(j["hold_window_hours"]);
        if (j.contains("hold_window_min_hours")) c.hold_window_min = hours(j["hold_window_min_hours"]);
        if (j.contains("hold_window_max_hours")) c.hold_window_max = hours(j["hold_window_max_hours"]);
        if (j.contains("abs_daily_cap")) c.abs_daily_cap = j["abs_daily_cap"].get<std::int64_t>();
        if (j.contains("pct300")) c.pct300 = parse_rational(j["pct300"]);
        if (j.contains("pct300_floor")) c.pct300_floor = j["pct300_floor"].get<std::int64_t>();
        if (j.contains("pct200")) c.pct200 = parse_rational(j["pct200"]);
        if (j.contains("pct200_floor")) c.pct200_floor = j["pct200_floor"].get<std::int64_t>();
        if (j.contains("pct50")) c.pct50 = parse_rational(j["pct50"]);
        if (j.contains("pct50_floor")) c.pct50_floor = j["pct50_floor"].get<std::int64_t>();
        if (j.contains("full_history_decrease_alarm_fraction")) {
            c.full_history_decrease_alarm_fraction = parse_rational(j["full_history_decrease_alarm_fraction"]);
        }
    }
    catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("gate config: ") + e.what());
    }
    c.validate();
    return c;
}

} // namespace covidnet

namespace covidnet {

using nlohmann::json;

void to_json(json& j, const Discrepancy& d)
{
    json note = json::array();
    for (const auto& c : d.staleness_note) {
        note.push_back({{"region_id", c.region_id}, {"value", c.value}, {"updated_at", format_instant(c.updated_at)}});
    }
    j = json{{"parent_region", d.parent_region},
             {"metric", d.metric},
             {"date", d.date},
             {"parent_value", d.parent_value},
             {"children_sum", d.children_sum},
             {"delta", d.delta},
             {"parent_updated_at", format_instant(d.parent_updated_at)},
             {"staleness_note", std::move(note)}};
}

void from_json(const json& j, Discrepancy& d)
{
    d.parent_region = j.at("parent_region").get<std::string>();
    d.metric = j.at("metric").get<Metric>();
    d.date = j.at("date").get<Date>();
    d.parent_value = j.at("parent_value").get<std::int64_t>();
    d.children_sum = j.at("children_sum").get<std::int64_t>();
    d.delta = j.at("delta").get<std::int64_t>();
    d.parent_updated_at = parse_instant(j.at("parent_updated_at").get<std::string>());
    d.staleness_note.clear();
    for (const auto& c : j.at("staleness_note")) {
        d.staleness_note.push_back({c.at("region_id").get<std::string>(), c.at("value").get<std::int64_t>(),
                                    parse_instant(c.at("updated_at").get<std::string>())});
    }
}

void to_json(json& j, const DiaryEntry& e)
{
    json notes = json::array();
    for (const auto& n : e.notes) {
        notes.push_back({{"at", format_instant(n.at)}, {"text", n.text}});
    }
    j = json{{"entry_id", e.entry_id},
             {"discrepancy", e.discrepancy},
             {"first_seen", format_instant(e.first_seen)},
             {"last_seen", format_instant(e.last_seen)},
             {"status", std::string(to_string(e.status))},
             {"notes", std::move(notes)}};
}

void from_json(const json& j, DiaryEntry& e)
{
    e.entry_id = j.at("entry_id").get<std::string>();
    e.discrepancy = j.at("discrepancy").get<Discrepancy>();
    e.first_seen = parse_instant(j.at("first_seen").get<std::string>());
    e.last_seen = parse_instant(j.at("last_seen").get<std::string>());
    e.status = parse_diary_status(j.at("status").get<std::string>());
    e.notes.clear();
    for (const auto& n : j.at("notes")) {
        e.notes.push_back({parse_instant(n.at("at").get<std::string>()), n.at("text").get<std::string>()});
    }
}

} // namespace covidnet

namespace covidnet {

using nlohmann::json;

void to_json(json& j, const IssueReport& r)
{
    j = json{{"issue_id", r.issue_id},
             {"category", std::string(to_string(r.category))},
             {"region_id", r.region_id ? json(*r.region_id) : json(nullptr)},
             {"links", r.links},
             {"body", r.body},
             {"submitted_at", format_instant(r.submitted_at)},
             {"state", std::string(to_string(r.state))},
             {"assignee", r.assignee ? json(*r.assignee) : json(nullptr)},
             {"resolution_note", r.resolution_note ? json(*r.resolution_note) : json(nullptr)},
             {"resulting_records", r.resulting_records}};
}

void from_json(const json& j, IssueReport& r)
{
    auto opt = [&](const char* key) {
        return j.contains(key) && !j[key].is_null() ? std::optional(j[key].get<std::string>()) : std::nullopt;
    };
    r.issue_id = j.at("issue_id").get<std::string>();
    r.category = parse_issue_category(j.at("category").get<std::string>());
    r.region_id = opt("region_id");
    r.links = j.at("links").get<std::vector<std::string>>();
    r.body = j.at("body").get<std::string>();
    r.submitted_at = parse_instant(j.at("submitted_at").get<std::string>());
    r.state = parse_issue_state(j.at("state").get<std::string>());
    r.assignee = opt("assignee");
    r.resolution_note = opt("resolution_note");
    r.resulting_records = j.value("resulting_records", std::vector<std::string>{});
}

void to_json(json& j, const QueueStats& s)
{
    json by_category = json::object();
    for (auto c : kAllIssueCategories) {
        json states = json::object();
        for (auto st : kAllIssueStates) {
            auto cat = s.counts.find(c);
            std::size_t n = 0;
            if (cat != s.counts.end()) {
                if (auto it = cat->second.find(st); it != cat->second.end()) {
                    n = it->second;
                }
            }
            states[std::string(to_string(st))] = n;
        }
        by_category[std::string(to_string(c))] = std::move(states);
    }
    json by_state = json::object();
    for (auto st : kAllIssueStates) {
        by_state[std::string(to_string(st))] = s.in_state(st);
    }
    j = json{{"total", s.total}, {"by_state", std::move(by_state)}, {"by_category", std::move(by_category)}};
}

} // namespace covidnet
