#include <httplib.h>

#include "covidnet/api.hpp"

#include "covidnet/json_io.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <thread>

namespace covidnet {

namespace {

using nlohmann::json;

struct HttpError {
    int status;
    std::string tag;
    std::string message;
};

std::vector<std::string> split_path(std::string_view path)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        if (path[i] == '/') {
            ++i;
            continue;
        }
        auto j = path.find('/', i);
        if (j == std::string_view::npos) {
            j = path.size();
        }
        out.emplace_back(path.substr(i, j - i));
        i = j;
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

ApiResponse json_response(int status, const json& body)
{
    return {status, "application/json", body.dump()};
}

ApiResponse error_response(int status, std::string_view tag, const std::string& message)
{
    return json_response(status, json{{"error", tag}, {"message", message}, {"status", status}});
}

std::optional<std::string> query(const ApiRequest& r, const std::string& key)
{
    auto it = r.query.find(key);
    if (it == r.query.end() || it->second.empty()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<Date> query_date(const ApiRequest& r, const std::string& key)
{
    auto v = query(r, key);
    if (!v) {
        return std::nullopt;
    }
    try {
        return Date::parse(*v);
    }
    catch (const Error&) {
        throw Error(ErrorCode::Validation, key + " is not a YYYY-MM-DD date: " + *v);
    }
}

std::int64_t parse_int(const std::string& key, const std::string& text)
{
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(text, &used);
    }
    catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty()) {
        throw Error(ErrorCode::Validation, key + " is not an integer: " + text);
    }
    return v;
}

json parse_body(const ApiRequest& r)
{
    if (r.body.empty()) {
        return json::object();
    }
    try {
        auto j = json::parse(r.body);
        if (!j.is_object()) {
            throw Error(ErrorCode::Validation, "request body must be a JSON object");
        }
        return j;
    }
    catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedPayload, std::string("request body: ") + e.what());
    }
}

std::string body_string(const json& body, const char* key, bool required)
{
    if (!body.contains(key) || body[key].is_null()) {
        if (required) {
            throw Error(ErrorCode::Validation, std::string("missing field: ") + key);
        }
        return {};
    }
    if (!body[key].is_string()) {
        throw Error(ErrorCode::Validation, std::string(key) + " must be a string");
    }
    return body[key].get<std::string>();
}

json point_json(const DatedValue& v, const SeriesPoint& p)
{
    return json{{"date", v.date},
                {"value", v.value},
                {"source", p.provenance.source_id},
                {"fetched_at", format_instant(p.provenance.fetched_at)}};
}

json aligned_json(const std::vector<AlignedPoint>& points)
{
    json out = json::array();
    for (const auto& p : points) {
        out.push_back({{"day", p.day}, {"value", p.value}});
    }
    return out;
}

} // namespace

int http_status(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::UnknownRegion:
    case ErrorCode::UnknownSource:
    case ErrorCode::UnknownTicket:
    case ErrorCode::UnknownIssue:
        return 404;
    case ErrorCode::AlreadyResolved:
    case ErrorCode::InvalidTransition:
    case ErrorCode::AlreadyBackfilled:
    case ErrorCode::DuplicateCode:
        return 409;
    case ErrorCode::FetchFailed:
        return 502;
    case ErrorCode::Io:
        return 500;
    default:
        return 422;
    }
}

struct ApiService::Server {
    httplib::Server http;
    std::thread thread;
};

ApiService::ApiService(Engine& engine, Clock clock) : engine_(engine), clock_(std::move(clock)) {}

ApiService::~ApiService() { stop(); }

Instant ApiService::now() const
{
    if (clock_) {
        return clock_();
    }
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

ApiResponse ApiService::handle(const ApiRequest& req)
{
    auto& regions = engine_.regions();
    auto& store = engine_.store();
    const auto seg = split_path(req.path);
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";

    auto require_token = [&] {
        const auto& token = engine_.config().api.token;
        const std::string expected = "Bearer " + token;
        if (token.empty() || !req.authorization || *req.authorization != expected) {
            throw HttpError{401, "Unauthorized", "missing or invalid bearer token"};
        }
    };
    auto region_arg = [&](const std::string& id) {
        if (!regions.contains(id)) {
            throw Error(ErrorCode::UnknownRegion, "unknown region: " + id);
        }
        return regions.resolve(id);
    };
    auto metric_arg = [&](const std::optional<std::string>& text) {
        return text ? parse_metric(*text) : Metric::Confirmed;
    };
    auto hold_pending = [&](const std::string& region, Metric metric) {
        for (const auto& t : engine_.gate().tickets(TicketState::Held)) {
            if (t.region_id == region && t.metric == metric) {
                return true;
            }
        }
        return false;
    };
    // Latest date any series under `region` has for `metric`.
    auto latest_within = [&](const std::string& region, Metric metric) {
        std::optional<Date> latest;
        for (const auto& key : store.keys()) {
            if (key.metric != metric || !regions.is_within(key.region_id, region)) {
                continue;
            }
            if (auto s = store.series(key.region_id, key.metric); s && s->latest()) {
                latest = latest ? std::max(*latest, s->latest()->date) : s->latest()->date;
            }
        }
        return latest;
    };
    auto align_threshold = [&]() -> std::optional<std::int64_t> {
        auto v = query(req, "align_threshold");
        if (!v) {
            return std::nullopt;
        }
        auto t = parse_int("align_threshold", *v);
        if (t <= 0) {
            throw Error(ErrorCode::Validation, "align_threshold must be positive");
        }
        return t;
    };

    try {
        if (seg.empty()) {
            throw HttpError{404, "NoRoute", "no such endpoint: " + req.path};
        }
        const auto& head = seg[0];

        if (head == "regions" && seg.size() == 1 && get) {
            std::vector<Region> list;
            if (auto parent = query(req, "parent")) {
                region_arg(*parent);
                list = regions.children(*parent);
            }
            else {
                list = regions.roots();
            }
            return json_response(200, json{{"regions", list}, {"flags", json::array()}});
        }

        if (head == "series" && seg.size() == 3 && get) {
            auto region = region_arg(seg[1]);
            auto metric = parse_metric(seg[2]);
            auto from = query_date(req, "from");
            auto to = query_date(req, "to");
            if (from && to && *from > *to) {
                throw Error(ErrorCode::EmptyDateRange, "from is after to");
            }
            auto scale = query(req, "scale").value_or("linear");
            if (scale != "linear" && scale != "log") {
                throw Error(ErrorCode::Validation, "scale must be linear or log");
            }
            json flags = json::array();
            json points = json::array();
            std::vector<DatedValue> values;
            if (auto s = store.series(region.id, metric)) {
                for (const auto& [date, p] : s->points) {
                    if ((from && date < *from) || (to && date > *to)) {
                        continue;
                    }
                    points.push_back(point_json({date, p.value}, p));
                    values.push_back({date, p.value});
                }
            }
            json body{{"region_id", region.id},
                      {"metric", metric},
                      {"scale", scale},
                      {"points", std::move(points)}};
            if (auto threshold = align_threshold()) {
                body["align_threshold"] = *threshold;
                auto aligned = align_at_threshold(values, *threshold);
                if (auto* pts = std::get_if<std::vector<AlignedPoint>>(&aligned)) {
                    body["aligned"] = aligned_json(*pts);
                }
                else {
                    body["aligned"] = nullptr;
                    body["below_threshold"] = true;
                    body["max_value"] = std::get<BelowThreshold>(aligned).max_value;
                    flags.push_back("BELOW_THRESHOLD");
                }
            }
            if (hold_pending(region.id, metric)) {
                flags.push_back("HOLD_PENDING");
            }
            body["flags"] = std::move(flags);
            return json_response(200, body);
        }

        if (head == "snapshot" && seg.size() == 2 && get) {
            auto region = region_arg(seg[1]);
            json flags = json::array();
            auto date = query_date(req, "date");
            if (!date) {
                date = latest_within(region.id, Metric::Confirmed);
            }
            if (!date) {
                flags.push_back("NO_DATA");
                auto row = make_stat_row(region, 0, 0, std::nullopt);
                json body = row;
                body["date"] = nullptr;
                body["active"] = nullptr;
                body["flags"] = std::move(flags);
                return json_response(200, body);
            }
            auto total = [&](Metric m) {
                return engine_.reconciler().finest_granularity_rollup(region.id, m, *date).at(region.id);
            };
            auto confirmed = total(Metric::Confirmed);
            auto deceased = total(Metric::Deceased);
            auto recovered = total(Metric::Recovered);
            std::optional<std::int64_t> rec;
            if (recovered.has_data) {
                rec = recovered.total;
            }
            auto row = make_stat_row(region, confirmed.total, deceased.total, rec);
            json body = row;
            body["date"] = *date;
            auto active = confirmed.total - deceased.total - rec.value_or(0);
            if (active < 0) {
                body["active"] = nullptr;
                flags.push_back("DATA_INCONSISTENT");
            }
            else {
                body["active"] = active;
            }
            if (confirmed.child_lead || deceased.child_lead || recovered.child_lead) {
                flags.push_back("CHILD_LEAD");
            }
            if (!confirmed.has_data) {
                flags.push_back("NO_DATA");
            }
            body["flags"] = std::move(flags);
            return json_response(200, body);
        }

        if (head == "children-stats" && seg.size() == 2 && get) {
            auto region = region_arg(seg[1]);
            auto metric = metric_arg(query(req, "metric"));
            json flags = json::array();
            auto date = query_date(req, "date");
            if (!date) {
                date = latest_within(region.id, metric);
            }
            json entries = json::array();
            json body{{"region_id", region.id}, {"metric", metric}};
            if (!date) {
                flags.push_back("NO_DATA");
                body["date"] = nullptr;
                body["total"] = 0;
                body["entries"] = std::move(entries);
                body["flags"] = std::move(flags);
                return json_response(200, body);
            }
            auto rollup = engine_.reconciler().finest_granularity_rollup(region.id, metric, *date);
            const auto& parent = rollup.at(region.id);
            auto share = [&](std::int64_t v) -> json {
                if (parent.total <= 0) {
                    return nullptr;
                }
                return rational_json(Rational(v, parent.total));
            };
            for (const auto& child : regions.children(region.id)) {
                if (child.is_unassigned) {
                    continue;
                }
                auto it = rollup.find(child.id);
                std::int64_t v = it != rollup.end() && it->second.has_data ? it->second.total : 0;
                entries.push_back({{"region_id", child.id},
                                   {"name_en", child.name_en},
                                   {"value", v},
                                   {"share", share(v)},
                                   {"unassigned", false}});
            }
            if (parent.unassigned > 0) {
                entries.push_back({{"region_id", region.id + std::string(kUnassignedSuffix)},
                                   {"name_en", "Unassigned"},
                                   {"value", parent.unassigned},
                                   {"share", share(parent.unassigned)},
                                   {"unassigned", true}});
            }
            if (parent.child_lead) {
                flags.push_back("CHILD_LEAD");
            }
            if (!parent.has_data) {
                flags.push_back("NO_DATA");
            }
            body["date"] = *date;
            body["total"] = parent.total;
            body["entries"] = std::move(entries);
            body["flags"] = std::move(flags);
            return json_response(200, body);
        }

        if (head == "burndown" && seg.size() == 2 && get) {
            auto region = region_arg(seg[1]);
            auto c = store.series(region.id, Metric::Confirmed);
            auto d = store.series(region.id, Metric::Deceased);
            auto r = store.series(region.id, Metric::Recovered);
            std::set<Date> dates;
            for (const auto* s : {&c, &d, &r}) {
                if (*s) {
                    for (const auto& [date, _] : (*s)->points) {
                        dates.insert(date);
                    }
                }
            }
            auto at = [](const std::optional<CumulativeSeries>& s, Date date) {
                return s ? s->value_at(date).value_or(0) : std::int64_t{0};
            };
            json flags = json::array();
            json rows = json::array();
            bool inconsistent = false;
            for (auto date : dates) {
                auto confirmed = at(c, date);
                auto deceased = at(d, date);
                auto recovered = at(r, date);
                auto active = confirmed - deceased - recovered;
                json row{{"date", date}, {"deceased", deceased}, {"recovered", recovered}};
                if (active < 0) {
                    inconsistent = true;
                    row["active"] = nullptr;
                }
                else {
                    row["active"] = active;
                }
                rows.push_back(std::move(row));
            }
            if (inconsistent) {
                flags.push_back("DATA_INCONSISTENT");
            }
            if (!r) {
                flags.push_back("NO_RECOVERED_DATA");
            }
            return json_response(200, json{{"region_id", region.id}, {"points", std::move(rows)}, {"flags", flags}});
        }

        if (head == "compare" && seg.size() == 1 && get) {
            auto ids = split_list(query(req, "regions").value_or(""));
            if (ids.empty()) {
                throw Error(ErrorCode::Validation, "regions is required");
            }
            auto metric = metric_arg(query(req, "metric"));
            auto threshold = align_threshold().value_or(100);
            json series = json::array();
            json excluded = json::array();
            json flags = json::array();
            for (const auto& id : ids) {
                region_arg(id);
                std::vector<DatedValue> values;
                if (auto s = store.series(id, metric)) {
                    values = s->values();
                }
                auto aligned = align_at_threshold(values, threshold);
                if (auto* pts = std::get_if<std::vector<AlignedPoint>>(&aligned)) {
                    series.push_back({{"region_id", id}, {"points", aligned_json(*pts)}});
                }
                else {
                    excluded.push_back({{"region_id", id},
                                        {"reason", "below threshold"},
                                        {"max_value", std::get<BelowThreshold>(aligned).max_value}});
                }
            }
            if (!excluded.empty()) {
                flags.push_back("BELOW_THRESHOLD");
            }
            return json_response(200, json{{"metric", metric},
                                           {"align_threshold", threshold},
                                           {"series", std::move(series)},
                                           {"excluded", std::move(excluded)},
                                           {"flags", std::move(flags)}});
        }

        if (head == "holds") {
            if (seg.size() == 1 && get) {
                std::optional<TicketState> state;
                if (auto s = query(req, "state")) {
                    try {
                        state = parse_ticket_state(*s);
                    }
                    catch (const Error& e) {
                        throw Error(ErrorCode::Validation, e.what());
                    }
                }
                return json_response(200, json{{"tickets", engine_.gate().tickets(state)}, {"flags", json::array()}});
            }
            if (seg.size() == 3 && seg[2] == "decision" && post) {
                require_token();
                auto body = parse_body(req);
                Resolution decision;
                try {
                    decision = parse_resolution(body_string(body, "decision", true));
                }
                catch (const Error& e) {
                    throw Error(ErrorCode::Validation, e.what());
                }
                auto by = body_string(body, "operator", false);
                auto t = engine_.resolve_hold(seg[1], decision, by.empty() ? "api" : by, now());
                return json_response(200, json{{"ticket", t}, {"flags", json::array()}});
            }
        }

        if (head == "diary" && seg.size() == 1 && get) {
            std::optional<DiaryStatus> status;
            if (auto s = query(req, "status")) {
                try {
                    status = parse_diary_status(*s);
                }
                catch (const Error& e) {
                    throw Error(ErrorCode::Validation, e.what());
                }
            }
            return json_response(200,
                                 json{{"entries", engine_.reconciler().diary(status)}, {"flags", json::array()}});
        }

        if (head == "issues") {
            if (seg.size() == 1 && get) {
                std::optional<IssueState> state;
                std::optional<IssueCategory> category;
                if (auto s = query(req, "state")) {
                    state = parse_issue_state(*s);
                }
                if (auto c = query(req, "category")) {
                    category = parse_issue_category(*c);
                }
                return json_response(200, json{{"issues", engine_.issues().list(state, category)},
                                               {"stats", engine_.issues().queue_stats()},
                                               {"flags", json::array()}});
            }
            if (seg.size() == 1 && post) {
                require_token();
                auto body = parse_body(req);
                auto category = parse_issue_category(body_string(body, "category", true));
                std::optional<std::string> region;
                if (auto r = body_string(body, "region_id", false); !r.empty()) {
                    region = r;
                }
                std::vector<std::string> links;
                if (body.contains("links")) {
                    if (!body["links"].is_array()) {
                        throw Error(ErrorCode::Validation, "links must be an array of strings");
                    }
                    for (const auto& l : body["links"]) {
                        if (!l.is_string()) {
                            throw Error(ErrorCode::Validation, "links must be an array of strings");
                        }
                        links.push_back(l.get<std::string>());
                    }
                }
                auto issue = engine_.submit_issue(category, std::move(region), std::move(links),
                                                  body_string(body, "body", false), now());
                return json_response(201, json{{"issue", issue}, {"flags", json::array()}});
            }
            if (seg.size() == 3 && seg[2] == "assign" && post) {
                require_token();
                auto body = parse_body(req);
                auto issue = engine_.assign_issue(seg[1], body_string(body, "operator", true));
                return json_response(200, json{{"issue", issue}, {"flags", json::array()}});
            }
            if (seg.size() == 3 && seg[2] == "resolve" && post) {
                require_token();
                auto body = parse_body(req);
                auto outcome_text = body_string(body, "outcome", false);
                auto outcome = outcome_text.empty() ? IssueState::Resolved : parse_issue_state(outcome_text);
                std::vector<CaseRecord> records;
                if (body.contains("records")) {
                    try {
                        records = body["records"].get<std::vector<CaseRecord>>();
                    }
                    catch (const json::exception& e) {
                        throw Error(ErrorCode::Validation, std::string("records: ") + e.what());
                    }
                }
                auto issue = engine_.resolve_issue(seg[1], outcome, body_string(body, "note", false),
                                                   std::move(records), now());
                return json_response(200, json{{"issue", issue}, {"flags", json::array()}});
            }
        }

        if (head == "export" && seg.size() == 2 && seg[1] == "ct.csv" && get) {
            auto metric = metric_arg(query(req, "metric"));
            CompactTable table;
            if (auto ids_text = query(req, "regions")) {
                auto ids = split_list(*ids_text);
                std::optional<Date> from;
                std::optional<Date> to;
                for (const auto& id : ids) {
                    region_arg(id);
                    if (auto s = store.series(id, metric); s && !s->points.empty()) {
                        from = from ? std::min(*from, s->points.begin()->first) : s->points.begin()->first;
                        to = to ? std::max(*to, s->points.rbegin()->first) : s->points.rbegin()->first;
                    }
                }
                if (from) {
                    table = store.to_compact_table(ids, metric, *from, *to);
                }
            }
            else {
                table = store.to_compact_table(metric);
            }
            return {200, "text/csv", write_ct_csv(table)};
        }

        if (get || post) {
            throw HttpError{404, "NoRoute", "no such endpoint: " + req.method + " " + req.path};
        }
        throw HttpError{405, "MethodNotAllowed", "method not allowed: " + req.method};
    }
    catch (const HttpError& e) {
        return error_response(e.status, e.tag, e.message);
    }
    catch (const Error& e) {
        return error_response(http_status(e.code()), to_string(e.code()), e.what());
    }
    catch (const json::exception& e) {
        return error_response(422, to_string(ErrorCode::Validation), e.what());
    }
    catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

int ApiService::bind(const std::string& host, int port)
{
    stop();
    server_ = std::make_unique<Server>();
    auto& http = server_->http;
    auto dispatch = [this](const httplib::Request& hr, httplib::Response& res) {
        ApiRequest req;
        req.method = hr.method;
        req.path = hr.path;
        for (const auto& [k, v] : hr.params) {
            req.query[k] = v;
        }
        req.body = hr.body;
        if (hr.has_header("Authorization")) {
            req.authorization = hr.get_header_value("Authorization");
        }
        auto out = handle(req);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    const auto& static_dir = engine_.config().api.static_dir;
    if (!static_dir.empty() && !http.set_mount_point("/console", static_dir)) {
        throw Error(ErrorCode::Io, "static dir not found: " + static_dir);
    }
    http.Get(".*", dispatch);
    http.Post(".*", dispatch);
    int bound = port;
    if (port == 0) {
        bound = http.bind_to_any_port(host);
    }
    else if (!http.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) {
        server_.reset();
        throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    }
    return bound;
}

int ApiService::start(const std::string& host, int port)
{
    int bound = bind(host, port);
    server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
    server_->http.wait_until_ready();
    return bound;
}

void ApiService::serve(const std::string& host, int port)
{
    bind(host, port);
    server_->http.listen_after_bind();
}

void ApiService::stop()
{
    if (!server_) {
        return;
    }
    server_->http.stop();
    if (server_->thread.joinable()) {
        server_->thread.join();
    }
}

} // namespace covidnet
