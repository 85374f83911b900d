#pragma once

// nlohmann/json conversions for the domain types. These define the wire
// format of the API, the journal and the on-disk state.

#include "covidnet/region.hpp"
#include "covidnet/series.hpp"
#include "covidnet/time.hpp"

#include <json.hpp>

namespace covidnet {

void to_json(nlohmann::json& j, const Date& d);
void from_json(const nlohmann::json& j, Date& d);

void to_json(nlohmann::json& j, const Metric& m);
void from_json(const nlohmann::json& j, Metric& m);

void to_json(nlohmann::json& j, const Region& r);
void from_json(const nlohmann::json& j, Region& r);

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);

void to_json(nlohmann::json& j, const DatedValue& v);
void from_json(const nlohmann::json& j, DatedValue& v);

void to_json(nlohmann::json& j, const CaseRecord& r);
void from_json(const nlohmann::json& j, CaseRecord& r);

void to_json(nlohmann::json& j, const StatRow& r);

/// {"exact": "1/20", "decimal": 0.05}
nlohmann::json rational_json(const Rational& r);

} // namespace covidnet

#include "covidnet/gate.hpp"
#include "covidnet/ingest.hpp"

namespace covidnet {

void to_json(nlohmann::json& j, const ProposedChange& p);
void from_json(const nlohmann::json& j, ProposedChange& p);

void to_json(nlohmann::json& j, const HoldTicket& t);
void from_json(const nlohmann::json& j, HoldTicket& t);

void to_json(nlohmann::json& j, const GateDecision& d);

/// Optional keys override the defaults: jump_ratio, jump_floor,
/// hold_window_hours, hold_window_min_hours, hold_window_max_hours,
/// abs_daily_cap, pct300, pct300_floor, pct200, pct200_floor, pct50,
/// pct50_floor, full_history_decrease_alarm_fraction. Ratios are numbers or
/// "p/q" strings.
GateConfig gate_config_from_json(const nlohmann::json& j);

Rational parse_rational(const nlohmann::json& j);

} // namespace covidnet

#include "covidnet/reconciler.hpp"

namespace covidnet {

void to_json(nlohmann::json& j, const Discrepancy& d);
void from_json(const nlohmann::json& j, Discrepancy& d);

void to_json(nlohmann::json& j, const DiaryEntry& e);
void from_json(const nlohmann::json& j, DiaryEntry& e);

} // namespace covidnet

#include "covidnet/issues.hpp"

namespace covidnet {

void to_json(nlohmann::json& j, const IssueReport& r);
void from_json(const nlohmann::json& j, IssueReport& r);
void to_json(nlohmann::json& j, const QueueStats& s);

} // namespace covidnet
