#pragma once

#include "covidnet/ingest.hpp"
#include "covidnet/journal.hpp"
#include "covidnet/region.hpp"
#include "covidnet/series.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covidnet {

struct GateConfig {
    Rational jump_ratio{3};
    std::int64_t jump_floor = 100;
    std::chrono::seconds hold_window_min{std::chrono::hours{2}};
    std::chrono::seconds hold_window_max{std::chrono::hours{6}};
    std::chrono::seconds hold_window{std::chrono::hours{4}};
    std::int64_t abs_daily_cap = 4000;
    Rational pct300{3};
    std::int64_t pct300_floor = 10;
    Rational pct200{2};
    std::int64_t pct200_floor = 50;
    Rational pct50{1, 2};
    std::int64_t pct50_floor = 1000;
    Rational full_history_decrease_alarm_fraction{1, 10};

    /// Throws InvalidConfig.
    void validate() const;
};

/// Deployment-guard rules keep their published numbers 1..5; the rest are
/// gate-internal reasons for holding a proposal.
enum class GateRule : int {
    Decrease = 1,
    CountyDailyCap = 2,
    Increase300 = 3,
    Increase200 = 4,
    Increase50 = 5,
    Jump = 101,
    SuccessorConflict = 102,
    NonMonotonicPayload = 103,
    HistoryDecreaseAlarm = 104,
};

std::string to_string(GateRule rule);
GateRule parse_gate_rule(std::string_view text);

struct GateDecision {
    enum class Kind { Allow, Block, Hold };
    Kind kind = Kind::Allow;
    std::vector<GateRule> rules;
    std::optional<std::string> ticket_id;

    bool operator==(const GateDecision&) const = default;
};

std::string_view to_string(GateDecision::Kind kind) noexcept;

/// The five pre-deployment rules. Returns Block with every rule that
/// fires, Allow otherwise. Rule 2 only applies to subdivisions.
GateDecision deployment_check(std::int64_t prev_value, std::int64_t new_value, Level region_level,
                              const GateConfig& config = {});

/// A change by more than jump_ratio in either direction from a previous
/// value above jump_floor.
bool detect_jump(std::int64_t prev_value, std::int64_t new_value, const GateConfig& config = {});

enum class DecreaseClass { HistoryCorrection, JumpError };

std::string_view to_string(DecreaseClass c) noexcept;

/// Throws NotADecrease unless new_value < last_value.
DecreaseClass classify_decrease(std::int64_t last_value, std::int64_t new_value, const GateConfig& config = {});
DecreaseClass classify_decrease(const CumulativeSeries& series, std::int64_t new_value,
                                const GateConfig& config = {});

struct DedupeResult {
    bool duplicate = false;
    std::string existing_id;
};

/// Duplicate iff a record in the same region matches on date, metric and
/// cluster size and either shares a source link or carries the same
/// (non-empty) demographics. Records in other regions are never compared.
DedupeResult dedupe_case(const CaseRecord& candidate, std::span<const CaseRecord> existing);

enum class TicketState { Held, Approved, Rejected, ExpiredRetried };
enum class Resolution { Approve, Reject };

std::string_view to_string(TicketState s) noexcept;
TicketState parse_ticket_state(std::string_view text);
Resolution parse_resolution(std::string_view text);

struct HoldTicket {
    std::string ticket_id;
    std::string region_id;
    Metric metric = Metric::Confirmed;
    ProposedChange proposed;
    std::int64_t prev_value = 0;
    std::vector<GateRule> triggered_rules;
    Instant created_at{};
    Instant expires_at{};
    TicketState state = TicketState::Held;
    std::optional<std::string> resolved_by;
    std::optional<Instant> resolved_at;
};

/// What happened to a submitted proposal.
struct GateOutcome {
    enum class Action { Committed, Repaired, Replaced, Held, AlreadyHeld };
    Action action = Action::Committed;
    GateDecision decision;
    std::int64_t prev_value = 0;
    std::optional<HoldTicket> ticket;
};

std::string_view to_string(GateOutcome::Action a) noexcept;

/// Evaluates proposals and commits the allowed ones. Evaluation and commit
/// for a proposal are one step under the gate lock; ticket transitions are
/// checked under the same lock, so a second resolver gets AlreadyResolved.
class QualityGate {
public:
    QualityGate(GateConfig config, const RegionTree& regions, SeriesStore& store, Journal& journal);

    GateOutcome submit(const ProposedChange& proposal, Instant now);

    /// Evaluation only: no commit, no ticket, no journal entry.
    GateOutcome preview(const ProposedChange& proposal) const;

    HoldTicket open_hold(const ProposedChange& proposal, std::vector<GateRule> rules, std::int64_t prev_value,
                         Instant now);

    /// APPROVE commits past the rules; REJECT discards.
    HoldTicket resolve_hold(const std::string& ticket_id, Resolution decision, const std::string& operator_id,
                            Instant now);

    /// Current source view of a held proposal, or nullopt if the source
    /// could not be reached.
    using Refetch = std::function<std::optional<ProposedChange>(const HoldTicket&)>;

    /// Re-checks every HELD ticket past its expiry. Agreement with the
    /// refetched value commits (EXPIRED_RETRIED); disagreement discards
    /// (REJECTED). Unreachable sources leave the ticket held.
    std::vector<HoldTicket> expire_holds(Instant now, const Refetch& refetch);

    std::vector<HoldTicket> tickets(std::optional<TicketState> state = std::nullopt) const;
    HoldTicket ticket(const std::string& ticket_id) const;

    const GateConfig& config() const { return config_; }

    std::string dump_state() const;
    void restore_state(std::string_view dump);

private:
    struct Evaluation {
        GateOutcome::Action action;
        std::vector<GateRule> rules;
        std::int64_t prev_value = 0;
    };

    Evaluation evaluate(const ProposedChange& proposal) const;
    void apply_override(const ProposedChange& proposal);
    HoldTicket open_locked(const ProposedChange& proposal, std::vector<GateRule> rules, std::int64_t prev_value,
                           Instant now);
    void supersede_locked(const ProposedChange& committed, Instant now);
    void transition_locked(HoldTicket& ticket, TicketState to, const std::string& by, Instant now);
    void journal_decision(const ProposedChange& p, const Evaluation& e, const std::optional<std::string>& ticket,
                          Instant now);

    GateConfig config_;
    const RegionTree& regions_;
    SeriesStore& store_;
    Journal& journal_;
    mutable std::mutex mu_;
    std::map<std::string, HoldTicket> tickets_;
    std::uint64_t next_ticket_ = 1;
};

} // namespace covidnet
