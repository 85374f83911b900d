#include "covidnet/api.hpp"
#include "covidnet/engine.hpp"
#include "covidnet/error.hpp"
#include "covidnet/json_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace covidnet;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Options {
    std::string config;
    std::string store;
    std::string token;
    std::string now;
};

Instant wall_clock()
{
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

EngineConfig make_config(const Options& o)
{
    EngineConfig c;
    if (!o.config.empty()) {
        c = EngineConfig::load(o.config);
    }
    else {
        c.apply_env();
    }
    if (!o.store.empty()) {
        c.store_dir = o.store;
    }
    if (!o.token.empty()) {
        c.api.token = o.token;
    }
    return c;
}

std::string read_input(const std::string& path)
{
    if (path == "-") {
        std::stringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string rules_text(const std::vector<GateRule>& rules)
{
    std::string out = "{";
    for (std::size_t i = 0; i < rules.size(); ++i) {
        out += (i ? "," : "") + to_string(rules[i]);
    }
    return out + "}";
}

void print_report(const IngestReport& r)
{
    if (r.error) {
        std::cerr << r.source_id << ": " << *r.error << "\n";
        return;
    }
    std::cout << r.source_id << ": " << r.observations << " observations, "
              << r.count(GateOutcome::Action::Committed) << " committed, "
              << r.count(GateOutcome::Action::Repaired) << " repaired, "
              << r.count(GateOutcome::Action::Replaced) << " replaced, "
              << r.count(GateOutcome::Action::Held) << " held";
    if (r.new_records || r.duplicates) {
        std::cout << ", " << r.new_records << " new records, " << r.duplicates << " duplicates";
    }
    std::cout << "\n";
    for (const auto& key : r.unmatched_keys) {
        std::cerr << r.source_id << ": unmatched region key " << key << "\n";
    }
    for (const auto& o : r.outcomes) {
        if (o.ticket) {
            std::cout << "  hold " << o.ticket->ticket_id << " " << o.ticket->region_id << " "
                      << to_string(o.ticket->metric) << " rules " << rules_text(o.ticket->triggered_rules) << "\n";
        }
    }
}

void print_ticket(const HoldTicket& t)
{
    std::cout << t.ticket_id << " " << to_string(t.state) << " " << t.region_id << " " << to_string(t.metric) << " ";
    if (t.proposed.kind == ChangeKind::CommitPoint) {
        std::cout << t.proposed.date.iso() << " " << t.prev_value << " -> " << t.proposed.value;
    }
    else {
        std::cout << "history(" << t.proposed.history.size() << " points)";
    }
    std::cout << " rules " << rules_text(t.triggered_rules) << " expires " << format_instant(t.expires_at);
    if (t.resolved_by) {
        std::cout << " by " << *t.resolved_by;
    }
    std::cout << "\n";
}

ApiService* g_server = nullptr;

extern "C" void on_signal(int)
{
    if (g_server) {
        g_server->stop();
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Epidemic time-series ingestion and quality control"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--config", opt.config, "Engine config file (JSON)");
    app.add_option("--store", opt.store, "Store directory; overrides the config");
    app.add_option("--token", opt.token, "API bearer token; overrides the config");
    app.add_option("--now", opt.now, "Clock override, RFC 3339");

    auto* ingest = app.add_subcommand("ingest", "Poll every due source once");
    std::string ingest_source;
    std::string ingest_payload;
    ingest->add_option("--source", ingest_source, "Ingest a local payload for this source instead of polling");
    ingest->add_option("--payload", ingest_payload, "Payload file ('-' for stdin)");

    auto* poll = app.add_subcommand("poll", "Run the polling scheduler");
    int poll_interval = 60;
    int poll_iterations = 0;
    poll->add_option("--interval", poll_interval, "Seconds between scheduler ticks")->check(CLI::PositiveNumber);
    poll->add_option("--iterations", poll_iterations, "Stop after N ticks (0: run forever)")
        ->check(CLI::NonNegativeNumber);

    auto* backfill = app.add_subcommand("backfill", "Replay a snapshot source's archives once");
    std::string backfill_source;
    backfill->add_option("source", backfill_source, "Source id")->required();

    auto* validate = app.add_subcommand("validate", "Run the deployment rules over a payload without committing");
    std::string validate_source;
    std::string validate_payload;
    validate->add_option("--source", validate_source, "Source whose field map applies")->required();
    validate->add_option("payload", validate_payload, "Payload file ('-' for stdin)")->required();

    auto* export_ct = app.add_subcommand("export-ct", "Write the compact table as CSV");
    std::string export_metric = "confirmed";
    std::string export_regions;
    export_ct->add_option("--metric", export_metric, "Metric to export");
    export_ct->add_option("--regions", export_regions, "Comma-separated region codes");

    auto* holds = app.add_subcommand("holds", "Inspect and resolve held deployments");
    holds->require_subcommand(1);
    auto* holds_list = holds->add_subcommand("list", "List tickets");
    std::string holds_state;
    holds_list->add_option("--state", holds_state, "HELD, APPROVED, REJECTED or EXPIRED_RETRIED");
    std::string ticket_id;
    std::string operator_id = "cli";
    auto* holds_approve = holds->add_subcommand("approve", "Commit a held proposal");
    holds_approve->add_option("ticket", ticket_id)->required();
    holds_approve->add_option("--operator", operator_id);
    auto* holds_reject = holds->add_subcommand("reject", "Discard a held proposal");
    holds_reject->add_option("ticket", ticket_id)->required();
    holds_reject->add_option("--operator", operator_id);

    auto* diary = app.add_subcommand("diary", "Inconsistency diary");
    diary->require_subcommand(1);
    auto* diary_list = diary->add_subcommand("list", "List diary entries");
    std::string diary_status;
    diary_list->add_option("--status", diary_status, "OPEN, RESOLVED or PERSISTENT");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::optional<int> serve_port;
    std::string serve_bind;
    serve->add_option("--port", serve_port, "Listen port; overrides config and COVIDNET_PORT");
    serve->add_option("--bind", serve_bind, "Listen address");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    }

    try {
        auto now = [&] { return opt.now.empty() ? wall_clock() : parse_instant(opt.now); };
        if (!opt.now.empty()) {
            now();
        }
        Engine engine(make_config(opt));

        if (*ingest) {
            std::vector<IngestReport> reports;
            if (!ingest_source.empty() || !ingest_payload.empty()) {
                if (ingest_source.empty() || ingest_payload.empty()) {
                    std::cerr << "ingest: --source and --payload go together\n";
                    return kUsage;
                }
                reports.push_back(engine.ingest_payload(ingest_source, read_input(ingest_payload), now()));
            }
            else {
                reports = engine.poll_once(now());
                engine.expire_holds(now());
            }
            bool failed = false;
            for (const auto& r : reports) {
                print_report(r);
                failed = failed || r.error.has_value();
            }
            return failed ? kFailure : kOk;
        }

        if (*poll) {
            for (int i = 0; poll_iterations == 0 || i < poll_iterations; ++i) {
                if (i > 0) {
                    std::this_thread::sleep_for(std::chrono::seconds{poll_interval});
                }
                for (const auto& r : engine.poll_once(now())) {
                    print_report(r);
                }
                for (const auto& t : engine.expire_holds(now())) {
                    print_ticket(t);
                }
                engine.reconcile(now());
            }
            return kOk;
        }

        if (*backfill) {
            for (const auto& r : engine.backfill(backfill_source, now())) {
                print_report(r);
            }
            return kOk;
        }

        if (*validate) {
            auto report = engine.validate(validate_source, read_input(validate_payload));
            for (const auto& key : report.unmatched_keys) {
                std::cerr << "unmatched region key " << key << "\n";
            }
            for (const auto& row : report.rows) {
                std::cout << row.region_id << " " << to_string(row.metric) << " " << row.date.iso() << " "
                          << row.prev_value << " -> " << row.new_value << " " << to_string(row.decision.kind);
                if (!row.decision.rules.empty()) {
                    std::cout << " rules " << rules_text(row.decision.rules);
                }
                std::cout << "\n";
            }
            return kOk;
        }

        if (*export_ct) {
            auto metric = parse_metric(export_metric);
            auto& store = engine.store();
            CompactTable table;
            if (export_regions.empty()) {
                table = store.to_compact_table(metric);
            }
            else {
                std::vector<std::string> ids;
                std::stringstream ss(export_regions);
                std::optional<Date> from;
                std::optional<Date> to;
                for (std::string id; std::getline(ss, id, ',');) {
                    engine.regions().resolve(id);
                    if (auto s = store.series(id, metric); s && !s->points.empty()) {
                        from = from ? std::min(*from, s->points.begin()->first) : s->points.begin()->first;
                        to = to ? std::max(*to, s->points.rbegin()->first) : s->points.rbegin()->first;
                    }
                    ids.push_back(id);
                }
                if (from) {
                    table = store.to_compact_table(ids, metric, *from, *to);
                }
            }
            std::cout << write_ct_csv(table);
            return kOk;
        }

        if (*holds) {
            if (*holds_list) {
                std::optional<TicketState> state;
                if (!holds_state.empty()) {
                    state = parse_ticket_state(holds_state);
                }
                for (const auto& t : engine.gate().tickets(state)) {
                    print_ticket(t);
                }
                return kOk;
            }
            auto decision = *holds_approve ? Resolution::Approve : Resolution::Reject;
            print_ticket(engine.resolve_hold(ticket_id, decision, operator_id, now()));
            return kOk;
        }

        if (*diary) {
            std::optional<DiaryStatus> status;
            if (!diary_status.empty()) {
                status = parse_diary_status(diary_status);
            }
            for (const auto& e : engine.reconciler().diary(status)) {
                const auto& d = e.discrepancy;
                std::cout << e.entry_id << " " << to_string(e.status) << " " << d.parent_region << " "
                          << to_string(d.metric) << " " << d.date.iso() << " parent " << d.parent_value
                          << " children " << d.children_sum << " delta " << d.delta << " first_seen "
                          << format_instant(e.first_seen) << "\n";
            }
            return kOk;
        }

        if (*serve) {
            const auto& api = engine.config().api;
            ApiService service(engine);
            g_server = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            auto host = serve_bind.empty() ? api.bind : serve_bind;
            auto port = serve_port.value_or(api.port);
            std::cerr << "listening on " << host << ":" << port << "\n";
            service.serve(host, port);
            g_server = nullptr;
            return kOk;
        }
    }
    catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return kFailure;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
