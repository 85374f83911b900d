#pragma once

#include "covidnet/region.hpp"
#include "covidnet/time.hpp"

#include <array>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace covidnet {

enum class IssueCategory {
    NewCase,
    RecoverCase,
    DeathCase,
    ErrorReport,
    FeatureRequest,
    BreakingNews,
    FurtherDetails,
    TestingLocation,
    Question,
};

inline constexpr std::array kAllIssueCategories = {
    IssueCategory::NewCase,        IssueCategory::RecoverCase,  IssueCategory::DeathCase,
    IssueCategory::ErrorReport,    IssueCategory::FeatureRequest, IssueCategory::BreakingNews,
    IssueCategory::FurtherDetails, IssueCategory::TestingLocation, IssueCategory::Question,
};

enum class IssueState { Open, Assigned, Resolved, Invalid };

inline constexpr std::array kAllIssueStates = {IssueState::Open, IssueState::Assigned, IssueState::Resolved,
                                               IssueState::Invalid};

std::string_view to_string(IssueCategory c) noexcept;
IssueCategory parse_issue_category(std::string_view text);
std::string_view to_string(IssueState s) noexcept;
IssueState parse_issue_state(std::string_view text);

/// New, recovered and death reports must carry a region and a link.
bool is_case_category(IssueCategory c) noexcept;

struct IssueReport {
    std::string issue_id;
    IssueCategory category = IssueCategory::Question;
    std::optional<std::string> region_id;
    std::vector<std::string> links;
    std::string body;
    Instant submitted_at{};
    IssueState state = IssueState::Open;
    std::optional<std::string> assignee;
    std::optional<std::string> resolution_note;
    std::vector<std::string> resulting_records;
};

struct QueueStats {
    std::map<IssueCategory, std::map<IssueState, std::size_t>> counts;
    std::size_t total = 0;

    std::size_t in_state(IssueState s) const;
    std::size_t in_category(IssueCategory c) const;
};

/// Crowd-sourced reports: OPEN -> ASSIGNED -> {RESOLVED, INVALID}. There is
/// no way back; a follow-up is a new issue.
class IssueDesk {
public:
    explicit IssueDesk(const RegionTree& regions);

    IssueReport submit(IssueCategory category, std::optional<std::string> region_id,
                       std::vector<std::string> links, std::string body, Instant now);
    IssueReport assign(const std::string& issue_id, const std::string& operator_id);
    IssueReport resolve(const std::string& issue_id, IssueState outcome, std::string note,
                        std::vector<std::string> resulting_records = {});

    IssueReport get(const std::string& issue_id) const;
    std::vector<IssueReport> list(std::optional<IssueState> state = std::nullopt,
                                  std::optional<IssueCategory> category = std::nullopt) const;
    QueueStats queue_stats() const;

    std::string dump_state() const;
    void restore_state(std::string_view dump);

private:
    const RegionTree& regions_;
    mutable std::mutex mu_;
    std::map<std::string, IssueReport> issues_;
    std::uint64_t next_issue_ = 1;
};

} // namespace covidnet
