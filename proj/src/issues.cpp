#include "covidnet/issues.hpp"

#include "covidnet/error.hpp"
#include "covidnet/json_io.hpp"

#include <cstdio>

namespace covidnet {

std::string_view to_string(IssueCategory c) noexcept
{
    switch (c) {
    case IssueCategory::NewCase: return "NEW_CASE";
    case IssueCategory::RecoverCase: return "RECOVER_CASE";
    case IssueCategory::DeathCase: return "DEATH_CASE";
    case IssueCategory::ErrorReport: return "ERROR_REPORT";
    case IssueCategory::FeatureRequest: return "FEATURE_REQUEST";
    case IssueCategory::BreakingNews: return "BREAKING_NEWS";
    case IssueCategory::FurtherDetails: return "FURTHER_DETAILS";
    case IssueCategory::TestingLocation: return "TESTING_LOCATION";
    case IssueCategory::Question: return "QUESTION";
    }
    return "?";
}

IssueCategory parse_issue_category(std::string_view text)
{
    for (auto c : kAllIssueCategories) {
        if (to_string(c) == text) {
            return c;
        }
    }
    throw Error(ErrorCode::Validation, "unknown issue category: " + std::string(text));
}

std::string_view to_string(IssueState s) noexcept
{
    switch (s) {
    case IssueState::Open: return "OPEN";
    case IssueState::Assigned: return "ASSIGNED";
    case IssueState::Resolved: return "RESOLVED";
    case IssueState::Invalid: return "INVALID";
    }
    return "?";
}

IssueState parse_issue_state(std::string_view text)
{
    for (auto s : kAllIssueStates) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw Error(ErrorCode::Validation, "unknown issue state: " + std::string(text));
}

bool is_case_category(IssueCategory c) noexcept
{
    return c == IssueCategory::NewCase || c == IssueCategory::RecoverCase || c == IssueCategory::DeathCase;
}

std::size_t QueueStats::in_state(IssueState s) const
{
    std::size_t n = 0;
    for (const auto& [c, states] : counts) {
        if (auto it = states.find(s); it != states.end()) {
            n += it->second;
        }
    }
    return n;
}

std::size_t QueueStats::in_category(IssueCategory c) const
{
    std::size_t n = 0;
    if (auto it = counts.find(c); it != counts.end()) {
        for (const auto& [s, k] : it->second) {
            n += k;
        }
    }
    return n;
}

IssueDesk::IssueDesk(const RegionTree& regions) : regions_(regions) {}

IssueReport IssueDesk::submit(IssueCategory category, std::optional<std::string> region_id,
                              std::vector<std::string> links, std::string body, Instant now)
{
    if (body.empty()) {
        throw Error(ErrorCode::Validation, "issue body is empty");
    }
    if (region_id && region_id->empty()) {
        region_id.reset();
    }
    if (is_case_category(category)) {
        if (links.empty()) {
            throw Error(ErrorCode::MissingLink, std::string(to_string(category)) + " reports need a source link");
        }
        if (!region_id) {
            throw Error(ErrorCode::MissingRegion, std::string(to_string(category)) + " reports need a region");
        }
    }
    if (region_id && !regions_.contains(*region_id)) {
        throw Error(ErrorCode::UnknownRegion, "unknown region: " + *region_id);
    }
    std::lock_guard lock(mu_);
    char id[32];
    std::snprintf(id, sizeof id, "I-%06llu", static_cast<unsigned long long>(next_issue_++));
    IssueReport r;
    r.issue_id = id;
    r.category = category;
    r.region_id = std::move(region_id);
    r.links = std::move(links);
    r.body = std::move(body);
    r.submitted_at = now;
    return issues_.emplace(r.issue_id, r).first->second;
}

IssueReport IssueDesk::assign(const std::string& issue_id, const std::string& operator_id)
{
    if (operator_id.empty()) {
        throw Error(ErrorCode::Validation, "assignee is empty");
    }
    std::lock_guard lock(mu_);
    auto it = issues_.find(issue_id);
    if (it == issues_.end()) {
        throw Error(ErrorCode::UnknownIssue, "unknown issue: " + issue_id);
    }
    auto& r = it->second;
    if (r.state != IssueState::Open) {
        throw Error(ErrorCode::InvalidTransition,
                    issue_id + ": cannot assign an issue in state " + std::string(to_string(r.state)));
    }
    r.state = IssueState::Assigned;
    r.assignee = operator_id;
    return r;
}

IssueReport IssueDesk::resolve(const std::string& issue_id, IssueState outcome, std::string note,
                               std::vector<std::string> resulting_records)
{
    if (outcome != IssueState::Resolved && outcome != IssueState::Invalid) {
        throw Error(ErrorCode::Validation, "outcome must be RESOLVED or INVALID");
    }
    if (note.empty()) {
        throw Error(ErrorCode::Validation, "a resolution note is required");
    }
    std::lock_guard lock(mu_);
    auto it = issues_.find(issue_id);
    if (it == issues_.end()) {
        throw Error(ErrorCode::UnknownIssue, "unknown issue: " + issue_id);
    }
    auto& r = it->second;
    if (r.state != IssueState::Assigned) {
        throw Error(ErrorCode::InvalidTransition,
                    issue_id + ": cannot resolve an issue in state " + std::string(to_string(r.state)));
    }
    r.state = outcome;
    r.resolution_note = std::move(note);
    r.resulting_records = std::move(resulting_records);
    return r;
}

IssueReport IssueDesk::get(const std::string& issue_id) const
{
    std::lock_guard lock(mu_);
    auto it = issues_.find(issue_id);
    if (it == issues_.end()) {
        throw Error(ErrorCode::UnknownIssue, "unknown issue: " + issue_id);
    }
    return it->second;
}

std::vector<IssueReport> IssueDesk::list(std::optional<IssueState> state, std::optional<IssueCategory> category) const
{
    std::lock_guard lock(mu_);
    std::vector<IssueReport> out;
    for (const auto& [id, r] : issues_) {
        if ((!state || r.state == *state) && (!category || r.category == *category)) {
            out.push_back(r);
        }
    }
    return out;
}

QueueStats IssueDesk::queue_stats() const
{
    std::lock_guard lock(mu_);
    QueueStats s;
    for (const auto& [id, r] : issues_) {
        ++s.counts[r.category][r.state];
        ++s.total;
    }
    return s;
}

std::string IssueDesk::dump_state() const
{
    std::lock_guard lock(mu_);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [id, r] : issues_) {
        list.push_back(r);
    }
    return nlohmann::json{{"next_issue", next_issue_}, {"issues", std::move(list)}}.dump();
}

void IssueDesk::restore_state(std::string_view dump)
{
    auto doc = nlohmann::json::parse(dump);
    std::map<std::string, IssueReport> issues;
    for (const auto& ji : doc.at("issues")) {
        auto r = ji.get<IssueReport>();
        issues.emplace(r.issue_id, std::move(r));
    }
    std::lock_guard lock(mu_);
    issues_ = std::move(issues);
    next_issue_ = doc.at("next_issue").get<std::uint64_t>();
}

} // namespace covidnet
