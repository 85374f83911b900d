#include "covidnet/gate.hpp"

#include "covidnet/error.hpp"
#include "covidnet/json_io.hpp"

#include <algorithm>
#include <cstdio>

namespace covidnet {

namespace {

using wide = __int128;

/// (new - prev) / prev > ratio, evaluated without division.
bool increase_exceeds(std::int64_t prev, std::int64_t next, const Rational& ratio)
{
    return static_cast<wide>(next - prev) * ratio.denominator() > static_cast<wide>(prev) * ratio.numerator();
}

bool has_rule(const std::vector<GateRule>& rules, GateRule r)
{
    return std::find(rules.begin(), rules.end(), r) != rules.end();
}

void add_rule(std::vector<GateRule>& rules, GateRule r)
{
    if (!has_rule(rules, r)) {
        rules.push_back(r);
    }
}

bool is_monotonic(std::span<const DatedValue> points)
{
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].value < 0 || (i > 0 && (points[i].date <= points[i - 1].date ||
                                              points[i].value < points[i - 1].value))) {
            return false;
        }
    }
    return true;
}

/// Backward running minimum: the smallest change that makes an approved but
/// non-monotonic history storable.
std::vector<DatedValue> clamp_history(std::vector<DatedValue> points)
{
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const auto& a, const auto& b) { return a.date == b.date; }),
                 points.end());
    for (std::size_t i = points.size(); i-- > 1;) {
        points[i - 1].value = std::min(points[i - 1].value, points[i].value);
    }
    for (auto& p : points) {
        p.value = std::max<std::int64_t>(p.value, 0);
    }
    return points;
}

} // namespace

void GateConfig::validate() const
{
    auto positive = [](const Rational& r) { return r > 0; };
    if (!positive(jump_ratio) || jump_floor <= 0 || abs_daily_cap <= 0 || !positive(pct300) || pct300_floor <= 0 ||
        !positive(pct200) || pct200_floor <= 0 || !positive(pct50) || pct50_floor <= 0 ||
        !positive(full_history_decrease_alarm_fraction)) {
        throw Error(ErrorCode::InvalidConfig, "gate thresholds must be positive");
    }
    if (hold_window_min <= std::chrono::seconds{0} || hold_window_min > hold_window_max ||
        hold_window < hold_window_min || hold_window > hold_window_max) {
        throw Error(ErrorCode::InvalidConfig, "hold window must satisfy 0 < min <= window <= max");
    }
}

std::string to_string(GateRule rule)
{
    switch (rule) {
    case GateRule::Jump: return "jump";
    case GateRule::SuccessorConflict: return "successor-conflict";
    case GateRule::NonMonotonicPayload: return "non-monotonic-payload";
    case GateRule::HistoryDecreaseAlarm: return "history-decrease";
    default: return std::to_string(static_cast<int>(rule));
    }
}

GateRule parse_gate_rule(std::string_view text)
{
    for (auto r : {GateRule::Decrease, GateRule::CountyDailyCap, GateRule::Increase300, GateRule::Increase200,
                   GateRule::Increase50, GateRule::Jump, GateRule::SuccessorConflict,
                   GateRule::NonMonotonicPayload, GateRule::HistoryDecreaseAlarm}) {
        if (to_string(r) == text) {
            return r;
        }
    }
    throw Error(ErrorCode::Validation, "unknown gate rule: " + std::string(text));
}

std::string_view to_string(GateDecision::Kind kind) noexcept
{
    switch (kind) {
    case GateDecision::Kind::Allow: return "ALLOW";
    case GateDecision::Kind::Block: return "BLOCK";
    case GateDecision::Kind::Hold: return "HOLD";
    }
    return "?";
}

std::string_view to_string(DecreaseClass c) noexcept
{
    return c == DecreaseClass::JumpError ? "JUMP_ERROR" : "HISTORY_CORRECTION";
}

std::string_view to_string(TicketState s) noexcept
{
    switch (s) {
    case TicketState::Held: return "HELD";
    case TicketState::Approved: return "APPROVED";
    case TicketState::Rejected: return "REJECTED";
    case TicketState::ExpiredRetried: return "EXPIRED_RETRIED";
    }
    return "?";
}

TicketState parse_ticket_state(std::string_view text)
{
    for (auto s : {TicketState::Held, TicketState::Approved, TicketState::Rejected, TicketState::ExpiredRetried}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw Error(ErrorCode::Validation, "unknown ticket state: " + std::string(text));
}

Resolution parse_resolution(std::string_view text)
{
    if (text == "APPROVE") return Resolution::Approve;
    if (text == "REJECT") return Resolution::Reject;
    throw Error(ErrorCode::Validation, "decision must be APPROVE or REJECT, got: " + std::string(text));
}

std::string_view to_string(GateOutcome::Action a) noexcept
{
    switch (a) {
    case GateOutcome::Action::Committed: return "commit";
    case GateOutcome::Action::Repaired: return "repair";
    case GateOutcome::Action::Replaced: return "replace";
    case GateOutcome::Action::Held: return "hold";
    case GateOutcome::Action::AlreadyHeld: return "already-held";
    }
    return "?";
}

// Rules ---------------------------------------------------------------------

GateDecision deployment_check(std::int64_t prev, std::int64_t next, Level level, const GateConfig& c)
{
    GateDecision d;
    if (next < prev) {
        d.rules.push_back(GateRule::Decrease);
    }
    if (level == Level::Subdivision && next - prev > c.abs_daily_cap) {
        d.rules.push_back(GateRule::CountyDailyCap);
    }
    if (prev > c.pct300_floor && increase_exceeds(prev, next, c.pct300)) {
        d.rules.push_back(GateRule::Increase300);
    }
    if (prev > c.pct200_floor && increase_exceeds(prev, next, c.pct200)) {
        d.rules.push_back(GateRule::Increase200);
    }
    if (prev > c.pct50_floor && increase_exceeds(prev, next, c.pct50)) {
        d.rules.push_back(GateRule::Increase50);
    }
    d.kind = d.rules.empty() ? GateDecision::Kind::Allow : GateDecision::Kind::Block;
    return d;
}

bool detect_jump(std::int64_t prev, std::int64_t next, const GateConfig& c)
{
    if (prev <= c.jump_floor) {
        return false;
    }
    const wide p = c.jump_ratio.numerator();
    const wide q = c.jump_ratio.denominator();
    return static_cast<wide>(next) * q > p * prev || static_cast<wide>(next) * p < static_cast<wide>(prev) * q;
}

DecreaseClass classify_decrease(std::int64_t last_value, std::int64_t new_value, const GateConfig& c)
{
    if (new_value >= last_value) {
        throw Error(ErrorCode::NotADecrease,
                    std::to_string(new_value) + " is not below " + std::to_string(last_value));
    }
    return detect_jump(last_value, new_value, c) ? DecreaseClass::JumpError : DecreaseClass::HistoryCorrection;
}

DecreaseClass classify_decrease(const CumulativeSeries& series, std::int64_t new_value, const GateConfig& c)
{
    auto last = series.latest();
    if (!last) {
        throw Error(ErrorCode::NotADecrease, "empty series has nothing to decrease from");
    }
    return classify_decrease(last->value, new_value, c);
}

DedupeResult dedupe_case(const CaseRecord& candidate, std::span<const CaseRecord> existing)
{
    for (const auto& e : existing) {
        if (e.region_id != candidate.region_id || e.report_date != candidate.report_date ||
            e.metric != candidate.metric || e.cluster_size != candidate.cluster_size) {
            continue;
        }
        bool shared_ref = std::any_of(candidate.source_refs.begin(), candidate.source_refs.end(),
                                      [&](const std::string& ref) {
                                          return std::find(e.source_refs.begin(), e.source_refs.end(), ref) !=
                                                 e.source_refs.end();
                                      });
        bool same_demographics = !candidate.demographics.empty() && candidate.demographics == e.demographics;
        if (shared_ref || same_demographics) {
            return {true, e.record_id};
        }
    }
    return {};
}

// QualityGate ---------------------------------------------------------------

QualityGate::QualityGate(GateConfig config, const RegionTree& regions, SeriesStore& store, Journal& journal)
    : config_(std::move(config)), regions_(regions), store_(store), journal_(journal)
{
    config_.validate();
}

QualityGate::Evaluation QualityGate::evaluate(const ProposedChange& p) const
{
    auto region = regions_.find(p.region_id);
    if (!region) {
        throw Error(ErrorCode::UnknownRegion, "unknown region: " + p.region_id);
    }
    auto stored = store_.series(p.region_id, p.metric).value_or(CumulativeSeries{p.region_id, p.metric, {}});
    Evaluation e{GateOutcome::Action::Committed, {}, 0};

    if (p.kind == ChangeKind::CommitPoint) {
        if (p.value < 0) {
            throw Error(ErrorCode::Validation, "counts are non-negative");
        }
        auto prev = stored.before(p.date);
        e.prev_value = prev ? prev->value : 0;
        auto check = deployment_check(e.prev_value, p.value, region->level, config_);
        e.rules = check.rules;
        bool jump = detect_jump(e.prev_value, p.value, config_);
        if (has_rule(e.rules, GateRule::Decrease)) {
            if (classify_decrease(e.prev_value, p.value, config_) == DecreaseClass::JumpError) {
                add_rule(e.rules, GateRule::Jump);
                e.action = GateOutcome::Action::Held;
            }
            else {
                e.action = GateOutcome::Action::Repaired;
            }
            return e;
        }
        if (jump) {
            add_rule(e.rules, GateRule::Jump);
        }
        auto next = stored.points.upper_bound(p.date);
        if (e.rules.empty() && next != stored.points.end() && next->second.value < p.value) {
            e.rules.push_back(GateRule::SuccessorConflict);
        }
        e.action = e.rules.empty() ? GateOutcome::Action::Committed : GateOutcome::Action::Held;
        return e;
    }

    auto latest = stored.latest();
    e.prev_value = latest ? latest->value : 0;
    e.action = GateOutcome::Action::Replaced;
    if (!is_monotonic(p.history)) {
        e.rules.push_back(GateRule::NonMonotonicPayload);
        e.action = GateOutcome::Action::Held;
        return e;
    }
    const auto& fraction = config_.full_history_decrease_alarm_fraction;
    for (std::size_t i = 0; i < p.history.size(); ++i) {
        const auto& point = p.history[i];
        auto old = stored.points.find(point.date);
        bool changed = old == stored.points.end() || old->second.value != point.value;
        if (old != stored.points.end() && old->second.value > point.value) {
            const auto drop = old->second.value - point.value;
            if (static_cast<wide>(drop) * fraction.denominator() >
                static_cast<wide>(old->second.value) * fraction.numerator()) {
                add_rule(e.rules, GateRule::HistoryDecreaseAlarm);
            }
        }
        if (!changed) {
            continue;
        }
        const std::int64_t before = i == 0 ? 0 : p.history[i - 1].value;
        for (auto r : deployment_check(before, point.value, region->level, config_).rules) {
            add_rule(e.rules, r);
        }
        if (detect_jump(before, point.value, config_)) {
            add_rule(e.rules, GateRule::Jump);
        }
    }
    if (!e.rules.empty()) {
        e.action = GateOutcome::Action::Held;
    }
    return e;
}

GateOutcome QualityGate::preview(const ProposedChange& proposal) const
{
    std::lock_guard lock(mu_);
    auto e = evaluate(proposal);
    GateOutcome out;
    out.action = e.action;
    out.prev_value = e.prev_value;
    out.decision.rules = e.rules;
    out.decision.kind = e.action == GateOutcome::Action::Held ? GateDecision::Kind::Hold : GateDecision::Kind::Allow;
    return out;
}

GateOutcome QualityGate::submit(const ProposedChange& p, Instant now)
{
    std::lock_guard lock(mu_);
    for (const auto& [id, t] : tickets_) {
        if (t.state == TicketState::Held && t.proposed.same_payload(p)) {
            return GateOutcome{GateOutcome::Action::AlreadyHeld,
                               GateDecision{GateDecision::Kind::Hold, t.triggered_rules, id}, t.prev_value, t};
        }
    }
    auto e = evaluate(p);
    GateOutcome out;
    out.action = e.action;
    out.prev_value = e.prev_value;
    out.decision.rules = e.rules;
    switch (e.action) {
    case GateOutcome::Action::Committed:
        store_.commit_point(p.region_id, p.metric, p.date, p.value, p.provenance);
        break;
    case GateOutcome::Action::Repaired:
        store_.repair_commit(p.region_id, p.metric, p.date, p.value, p.provenance);
        break;
    case GateOutcome::Action::Replaced:
        store_.replace_history(p.region_id, p.metric, p.history, p.provenance);
        break;
    case GateOutcome::Action::Held:
    case GateOutcome::Action::AlreadyHeld: {
        auto ticket = open_locked(p, e.rules, e.prev_value, now);
        out.decision.kind = GateDecision::Kind::Hold;
        out.decision.ticket_id = ticket.ticket_id;
        journal_decision(p, e, ticket.ticket_id, now);
        out.ticket = std::move(ticket);
        return out;
    }
    }
    out.decision.kind = GateDecision::Kind::Allow;
    journal_decision(p, e, std::nullopt, now);
    supersede_locked(p, now);
    return out;
}

HoldTicket QualityGate::open_hold(const ProposedChange& proposal, std::vector<GateRule> rules,
                                  std::int64_t prev_value, Instant now)
{
    if (rules.empty()) {
        throw Error(ErrorCode::Validation, "a hold needs at least one triggered rule");
    }
    std::lock_guard lock(mu_);
    return open_locked(proposal, std::move(rules), prev_value, now);
}

HoldTicket QualityGate::open_locked(const ProposedChange& proposal, std::vector<GateRule> rules,
                                    std::int64_t prev_value, Instant now)
{
    char id[32];
    std::snprintf(id, sizeof id, "H-%06llu", static_cast<unsigned long long>(next_ticket_++));
    HoldTicket t;
    t.ticket_id = id;
    t.region_id = proposal.region_id;
    t.metric = proposal.metric;
    t.proposed = proposal;
    t.prev_value = prev_value;
    t.triggered_rules = std::move(rules);
    t.created_at = now;
    t.expires_at = now + config_.hold_window;
    return tickets_.emplace(t.ticket_id, t).first->second;
}

void QualityGate::apply_override(const ProposedChange& p)
{
    if (p.kind == ChangeKind::CommitPoint) {
        store_.force_commit(p.region_id, p.metric, p.date, p.value, p.provenance);
    }
    else {
        store_.replace_history(p.region_id, p.metric, clamp_history(p.history), p.provenance);
    }
}

void QualityGate::transition_locked(HoldTicket& t, TicketState to, const std::string& by, Instant now)
{
    if (t.state != TicketState::Held) {
        throw Error(ErrorCode::AlreadyResolved, t.ticket_id + " is already " + std::string(to_string(t.state)));
    }
    t.state = to;
    t.resolved_by = by;
    t.resolved_at = now;
    journal_.append(nlohmann::json{{"ts", format_instant(now)},
                                   {"event", "ticket"},
                                   {"ticket", t.ticket_id},
                                   {"region", t.region_id},
                                   {"metric", t.metric},
                                   {"state", std::string(to_string(to))},
                                   {"by", by}}
                        .dump());
}

HoldTicket QualityGate::resolve_hold(const std::string& ticket_id, Resolution decision,
                                     const std::string& operator_id, Instant now)
{
    std::lock_guard lock(mu_);
    auto it = tickets_.find(ticket_id);
    if (it == tickets_.end()) {
        throw Error(ErrorCode::UnknownTicket, "unknown ticket: " + ticket_id);
    }
    auto& t = it->second;
    if (t.state != TicketState::Held) {
        throw Error(ErrorCode::AlreadyResolved, t.ticket_id + " is already " + std::string(to_string(t.state)));
    }
    if (decision == Resolution::Approve) {
        apply_override(t.proposed);
        transition_locked(t, TicketState::Approved, operator_id, now);
    }
    else {
        transition_locked(t, TicketState::Rejected, operator_id, now);
    }
    return t;
}

std::vector<HoldTicket> QualityGate::expire_holds(Instant now, const Refetch& refetch)
{
    std::vector<std::string> due;
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, t] : tickets_) {
            if (t.state == TicketState::Held && t.expires_at <= now) {
                due.push_back(id);
            }
        }
    }
    std::vector<HoldTicket> out;
    for (const auto& id : due) {
        HoldTicket snapshot = ticket(id);
        // Fetch outside the lock; the state is re-checked below.
        auto current = refetch ? refetch(snapshot) : std::nullopt;
        std::lock_guard lock(mu_);
        auto& t = tickets_.at(id);
        if (t.state != TicketState::Held || !current) {
            continue;
        }
        if (current->same_payload(t.proposed)) {
            apply_override(t.proposed);
            transition_locked(t, TicketState::ExpiredRetried, "expiry", now);
        }
        else {
            transition_locked(t, TicketState::Rejected, "expiry", now);
        }
        out.push_back(t);
    }
    return out;
}

void QualityGate::supersede_locked(const ProposedChange& committed, Instant now)
{
    for (auto& [id, t] : tickets_) {
        if (t.state != TicketState::Held || t.region_id != committed.region_id || t.metric != committed.metric) {
            continue;
        }
        bool covered = committed.kind == ChangeKind::ReplaceHistory ||
                       (t.proposed.kind == ChangeKind::CommitPoint && t.proposed.date == committed.date);
        if (covered) {
            transition_locked(t, TicketState::Rejected, "superseded", now);
        }
    }
}

void QualityGate::journal_decision(const ProposedChange& p, const Evaluation& e,
                                   const std::optional<std::string>& ticket, Instant now)
{
    nlohmann::json rec{{"ts", format_instant(now)},
                       {"event", "decision"},
                       {"region", p.region_id},
                       {"metric", p.metric},
                       {"source", p.provenance.source_id},
                       {"prev", e.prev_value},
                       {"decision", e.action == GateOutcome::Action::Held ? "HOLD" : "ALLOW"},
                       {"action", std::string(to_string(e.action))}};
    nlohmann::json rules = nlohmann::json::array();
    for (auto r : e.rules) {
        rules.push_back(to_string(r));
    }
    rec["rules"] = std::move(rules);
    if (p.kind == ChangeKind::CommitPoint) {
        rec["date"] = p.date;
        rec["proposed"] = p.value;
    }
    else {
        rec["date"] = p.history.empty() ? nlohmann::json(nullptr) : nlohmann::json(p.history.back().date);
        rec["proposed"] = p.history.empty() ? nlohmann::json(nullptr) : nlohmann::json(p.history.back().value);
        rec["history_points"] = p.history.size();
    }
    if (ticket) {
        rec["ticket"] = *ticket;
    }
    journal_.append(rec.dump());
}

std::vector<HoldTicket> QualityGate::tickets(std::optional<TicketState> state) const
{
    std::lock_guard lock(mu_);
    std::vector<HoldTicket> out;
    for (const auto& [id, t] : tickets_) {
        if (!state || t.state == *state) {
            out.push_back(t);
        }
    }
    return out;
}

HoldTicket QualityGate::ticket(const std::string& ticket_id) const
{
    std::lock_guard lock(mu_);
    auto it = tickets_.find(ticket_id);
    if (it == tickets_.end()) {
        throw Error(ErrorCode::UnknownTicket, "unknown ticket: " + ticket_id);
    }
    return it->second;
}

std::string QualityGate::dump_state() const
{
    std::lock_guard lock(mu_);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [id, t] : tickets_) {
        list.push_back(t);
    }
    return nlohmann::json{{"next_ticket", next_ticket_}, {"tickets", std::move(list)}}.dump();
}

void QualityGate::restore_state(std::string_view dump)
{
    auto doc = nlohmann::json::parse(dump);
    std::map<std::string, HoldTicket> tickets;
    for (const auto& jt : doc.at("tickets")) {
        auto t = jt.get<HoldTicket>();
        tickets.emplace(t.ticket_id, std::move(t));
    }
    std::lock_guard lock(mu_);
    tickets_ = std::move(tickets);
    next_ticket_ = doc.at("next_ticket").get<std::uint64_t>();
}

} // namespace covidnet
