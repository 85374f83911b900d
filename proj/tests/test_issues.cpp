#include "covidnet/error.hpp"
#include "covidnet/issues.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

using namespace covidnet;
using fixture::at;

namespace {

const auto kNow = at("2020-04-01T12:00:00Z");

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    }
    catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::Io;
}

struct Desk : ::testing::Test {
    Desk()
    {
        fixture::florida(regions);
        regions.register_region(fixture::region("US-WA", Level::Division, "US"));
        regions.register_region(fixture::region("US-WA-033", Level::Subdivision, "US-WA"));
    }

    RegionTree regions;
    IssueDesk desk{regions};
};

} // namespace

TEST(IssueCategory, RoundTripsAllNine)
{
    EXPECT_EQ(kAllIssueCategories.size(), 9u);
    for (auto c : kAllIssueCategories) {
        EXPECT_EQ(parse_issue_category(to_string(c)), c);
    }
    EXPECT_EQ(to_string(IssueCategory::NewCase), "NEW_CASE");
    EXPECT_THROW(parse_issue_category("SPAM"), Error);
}

TEST_F(Desk, NewCaseWithLinkOpens)
{
    auto issue = desk.submit(IssueCategory::NewCase, "US-WA-033", {"https://news.example/king"}, "one new case", kNow);
    EXPECT_EQ(issue.state, IssueState::Open);
    EXPECT_EQ(issue.issue_id, "I-000001");
    EXPECT_EQ(issue.region_id, "US-WA-033");
    EXPECT_EQ(issue.submitted_at, kNow);
}

TEST_F(Desk, NonCaseCategoryNeedsNoRegion)
{
    auto issue = desk.submit(IssueCategory::ErrorReport, std::nullopt, {}, "chart is wrong", kNow);
    EXPECT_EQ(issue.state, IssueState::Open);
    EXPECT_FALSE(issue.region_id);
}

TEST_F(Desk, SubmitGuards)
{
    EXPECT_EQ(code_of([&] { desk.submit(IssueCategory::DeathCase, "US-WA-033", {}, "x", kNow); }),
              ErrorCode::MissingLink);
    EXPECT_EQ(code_of([&] { desk.submit(IssueCategory::RecoverCase, std::nullopt, {"u"}, "x", kNow); }),
              ErrorCode::MissingRegion);
    EXPECT_EQ(code_of([&] { desk.submit(IssueCategory::NewCase, "XX-1", {"u"}, "x", kNow); }),
              ErrorCode::UnknownRegion);
    EXPECT_EQ(code_of([&] { desk.submit(IssueCategory::Question, std::nullopt, {}, "", kNow); }),
              ErrorCode::Validation);
    EXPECT_TRUE(desk.list().empty());
}

TEST_F(Desk, StateMachineWalk)
{
    auto id = desk.submit(IssueCategory::NewCase, "US-WA-033", {"u"}, "case", kNow).issue_id;
    auto assigned = desk.assign(id, "op");
    EXPECT_EQ(assigned.state, IssueState::Assigned);
    EXPECT_EQ(assigned.assignee, "op");
    auto resolved = desk.resolve(id, IssueState::Resolved, "added", {"issue:I-000001#0"});
    EXPECT_EQ(resolved.state, IssueState::Resolved);
    EXPECT_EQ(resolved.resolution_note, "added");
    EXPECT_EQ(resolved.resulting_records, (std::vector<std::string>{"issue:I-000001#0"}));
    EXPECT_EQ(code_of([&] { desk.resolve(id, IssueState::Invalid, "again"); }), ErrorCode::InvalidTransition);
    EXPECT_EQ(code_of([&] { desk.assign(id, "op2"); }), ErrorCode::InvalidTransition);
}

TEST_F(Desk, ResolveGuards)
{
    auto id = desk.submit(IssueCategory::BreakingNews, std::nullopt, {}, "news", kNow).issue_id;
    EXPECT_EQ(code_of([&] { desk.resolve(id, IssueState::Resolved, "note"); }), ErrorCode::InvalidTransition);
    desk.assign(id, "op");
    EXPECT_EQ(code_of([&] { desk.resolve(id, IssueState::Resolved, ""); }), ErrorCode::Validation);
    EXPECT_EQ(code_of([&] { desk.resolve(id, IssueState::Open, "note"); }), ErrorCode::Validation);
    EXPECT_EQ(desk.get(id).state, IssueState::Assigned);
    EXPECT_EQ(desk.resolve(id, IssueState::Invalid, "spam").state, IssueState::Invalid);
    EXPECT_EQ(code_of([&] { desk.get("I-999999"); }), ErrorCode::UnknownIssue);
    EXPECT_EQ(code_of([&] { desk.assign("I-999999", "op"); }), ErrorCode::UnknownIssue);
}

TEST_F(Desk, QueueStatsTally)
{
    auto empty = desk.queue_stats();
    EXPECT_EQ(empty.total, 0u);
    for (auto s : kAllIssueStates) {
        EXPECT_EQ(empty.in_state(s), 0u);
    }

    auto a = desk.submit(IssueCategory::NewCase, "US-WA-033", {"u"}, "a", kNow).issue_id;
    auto b = desk.submit(IssueCategory::Question, std::nullopt, {}, "b", kNow).issue_id;
    desk.submit(IssueCategory::Question, std::nullopt, {}, "c", kNow);
    desk.assign(a, "op");
    desk.assign(b, "op");
    desk.resolve(a, IssueState::Resolved, "done");
    auto stats = desk.queue_stats();
    EXPECT_EQ(stats.total, 3u);
    EXPECT_EQ(stats.in_state(IssueState::Open), 1u);
    EXPECT_EQ(stats.in_state(IssueState::Assigned), 1u);
    EXPECT_EQ(stats.in_state(IssueState::Resolved), 1u);
    EXPECT_EQ(stats.in_category(IssueCategory::Question), 2u);
    EXPECT_EQ(desk.list(IssueState::Open).size(), 1u);
    EXPECT_EQ(desk.list(std::nullopt, IssueCategory::NewCase).size(), 1u);
}

TEST_F(Desk, QueueStatsMatchTallyOracle)
{
    std::mt19937 rng(5);
    std::map<IssueState, std::size_t> expected;
    for (int i = 0; i < 200; ++i) {
        auto id = desk.submit(IssueCategory::Question, std::nullopt, {}, "q", kNow).issue_id;
        auto step = rng() % 4;
        IssueState s = IssueState::Open;
        if (step >= 1) {
            desk.assign(id, "op");
            s = IssueState::Assigned;
        }
        if (step == 2) {
            s = desk.resolve(id, IssueState::Resolved, "ok").state;
        }
        if (step == 3) {
            s = desk.resolve(id, IssueState::Invalid, "no").state;
        }
        ++expected[s];
    }
    auto stats = desk.queue_stats();
    for (auto s : kAllIssueStates) {
        EXPECT_EQ(stats.in_state(s), expected[s]);
    }
    EXPECT_EQ(stats.total, 200u);
}

TEST_F(Desk, StateRoundTrip)
{
    auto id = desk.submit(IssueCategory::NewCase, "US-WA-033", {"u"}, "a", kNow).issue_id;
    desk.assign(id, "op");
    IssueDesk copy{regions};
    copy.restore_state(desk.dump_state());
    EXPECT_EQ(copy.dump_state(), desk.dump_state());
    EXPECT_EQ(copy.get(id).assignee, "op");
    EXPECT_EQ(copy.submit(IssueCategory::Question, std::nullopt, {}, "b", kNow).issue_id, "I-000002");
}
