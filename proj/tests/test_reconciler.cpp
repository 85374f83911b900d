#include "covidnet/error.hpp"
#include "covidnet/reconciler.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace covidnet;
using fixture::at;
using fixture::day;

namespace {

const auto kDay = day("2020-04-01");
const auto kParentTime = at("2020-04-01T10:00:00Z");

struct Rig : fixture::GateRig {
    Reconciler reconciler{regions, store, gate};

    void put(const std::string& region, std::int64_t value, Instant when, Date d = kDay)
    {
        store.commit_point(region, Metric::Confirmed, d, value, Provenance{"test", when});
    }

    /// US-FL reports 100; counties as given, fetched at `child_time`.
    void florida_state(std::int64_t oka, std::int64_t dade, Instant child_time)
    {
        put("US-FL", 100, kParentTime);
        put("US-FL-091", oka, child_time);
        put("US-FL-086", dade, child_time);
    }
};

} // namespace

TEST(CrossLevel, ParentAboveChildrenIsConsistent)
{
    Rig rig;
    rig.florida_state(40, 50, kParentTime);
    auto r = rig.reconciler.cross_level_check("US-FL", Metric::Confirmed, kDay);
    ASSERT_TRUE(std::holds_alternative<Consistent>(r));
    EXPECT_EQ(std::get<Consistent>(r).unassigned, 10);
}

TEST(CrossLevel, FresherChildrenLead)
{
    Rig rig;
    rig.florida_state(60, 50, kParentTime + std::chrono::hours{3});
    auto r = rig.reconciler.cross_level_check("US-FL", Metric::Confirmed, kDay);
    ASSERT_TRUE(std::holds_alternative<ChildLead>(r));
    EXPECT_EQ(std::get<ChildLead>(r).delta, 10);
    rig.reconciler.sweep("US", Metric::Confirmed, kDay, kParentTime + std::chrono::hours{4});
    EXPECT_TRUE(rig.reconciler.diary().empty());
}

TEST(CrossLevel, FresherParentIsDiscrepancy)
{
    Rig rig;
    rig.florida_state(60, 50, kParentTime - std::chrono::hours{3});
    auto r = rig.reconciler.cross_level_check("US-FL", Metric::Confirmed, kDay);
    ASSERT_TRUE(std::holds_alternative<Discrepancy>(r));
    const auto& d = std::get<Discrepancy>(r);
    EXPECT_EQ(d.delta, -10);
    EXPECT_EQ(d.children_sum, 110);
    EXPECT_EQ(d.staleness_note.size(), 2u);

    auto report = rig.reconciler.sweep("US", Metric::Confirmed, kDay, kParentTime);
    ASSERT_EQ(report.discrepancies.size(), 1u);
    EXPECT_EQ(rig.reconciler.diary(DiaryStatus::Open).size(), 1u);
}

TEST(CrossLevel, ChildrenPastStalenessWindowAreDiscrepancy)
{
    Rig rig;
    rig.florida_state(60, 50, kParentTime + std::chrono::hours{30});
    auto r = rig.reconciler.cross_level_check("US-FL", Metric::Confirmed, kDay);
    EXPECT_TRUE(std::holds_alternative<Discrepancy>(r));
    auto wide = rig.reconciler.cross_level_check("US-FL", Metric::Confirmed, kDay, std::chrono::hours{48});
    EXPECT_TRUE(std::holds_alternative<ChildLead>(wide));
}

TEST(CrossLevel, Errors)
{
    Rig rig;
    rig.put("US-FL-091", 5, kParentTime);
    try {
        rig.reconciler.cross_level_check("US-FL", Metric::Confirmed, kDay);
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoParentReport);
    }
    rig.put("US-NY", 5, kParentTime);
    try {
        rig.reconciler.cross_level_check("US-NY", Metric::Confirmed, kDay);
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoData);
    }
}

TEST(ComputeUnassigned, Arithmetic)
{
    for (auto [oka, dade, expected] : {std::tuple{40, 50, 10}, {50, 50, 0}, {60, 50, 0}}) {
        Rig rig;
        rig.florida_state(oka, dade, kParentTime);
        EXPECT_EQ(rig.reconciler.compute_unassigned("US-FL", Metric::Confirmed, kDay, kParentTime), expected);
        EXPECT_EQ(rig.store.value_at("US-FL-UNASSIGNED", Metric::Confirmed, kDay), expected);
    }
}

TEST(ComputeUnassigned, UpdatesAreIdempotent)
{
    Rig rig;
    rig.florida_state(40, 50, kParentTime);
    rig.reconciler.compute_unassigned("US-FL", Metric::Confirmed, kDay, kParentTime);
    auto journal = rig.journal.size();
    rig.reconciler.compute_unassigned("US-FL", Metric::Confirmed, kDay, kParentTime);
    EXPECT_EQ(rig.journal.size(), journal);
}

TEST(Diary, UpsertKeepsOneEntry)
{
    Rig rig;
    Discrepancy d{"US-FL", Metric::Confirmed, kDay, 100, 110, -10, kParentTime, {}};
    auto first = rig.reconciler.diary_upsert(d, at("2020-04-01T12:00:00Z"));
    auto second = rig.reconciler.diary_upsert(d, at("2020-04-02T12:00:00Z"));
    EXPECT_EQ(first.entry_id, second.entry_id);
    EXPECT_EQ(second.first_seen, at("2020-04-01T12:00:00Z"));
    EXPECT_EQ(second.last_seen, at("2020-04-02T12:00:00Z"));
    EXPECT_EQ(rig.reconciler.diary().size(), 1u);
}

TEST(Diary, RevisitResolvesWhenFixed)
{
    Rig rig;
    rig.florida_state(60, 50, kParentTime - std::chrono::hours{3});
    rig.reconciler.sweep("US", Metric::Confirmed, kDay, kParentTime);
    rig.put("US-FL", 120, kParentTime + std::chrono::hours{20}, kDay + 1);
    auto revisited = rig.reconciler.periodic_revisit(kParentTime + std::chrono::hours{21});
    ASSERT_EQ(revisited.size(), 1u);
    EXPECT_EQ(revisited[0].status, DiaryStatus::Resolved);
    EXPECT_FALSE(revisited[0].notes.empty());
    EXPECT_TRUE(rig.reconciler.periodic_revisit(kParentTime + std::chrono::hours{22}).empty());
}

TEST(Diary, OpenPastHorizonBecomesPersistent)
{
    Rig rig;
    rig.florida_state(60, 50, kParentTime - std::chrono::hours{3});
    rig.reconciler.sweep("US", Metric::Confirmed, kDay, kParentTime);
    auto week = rig.reconciler.periodic_revisit(kParentTime + std::chrono::hours{24 * 7});
    EXPECT_EQ(week[0].status, DiaryStatus::Open);
    auto later = rig.reconciler.periodic_revisit(kParentTime + std::chrono::hours{24 * 8});
    EXPECT_EQ(later[0].status, DiaryStatus::Persistent);
    EXPECT_EQ(rig.reconciler.diary(DiaryStatus::Persistent).size(), 1u);
}

TEST(Diary, NotesAndRoundTrip)
{
    Rig rig;
    Discrepancy d{"US-FL", Metric::Confirmed, kDay, 100, 110, -10, kParentTime, {{"US-FL-091", 60, kParentTime}}};
    auto e = rig.reconciler.diary_upsert(d, kParentTime);
    rig.reconciler.add_note(e.entry_id, "called the state office", kParentTime);
    EXPECT_THROW(rig.reconciler.add_note("D-999999", "x", kParentTime), Error);

    Rig copy;
    copy.reconciler.restore_state(rig.reconciler.dump_state());
    EXPECT_EQ(copy.reconciler.dump_state(), rig.reconciler.dump_state());
    EXPECT_EQ(copy.reconciler.diary()[0].notes[0].text, "called the state office");
}

TEST(Rollup, ChildrenDriveParentTotal)
{
    Rig rig;
    rig.florida_state(40, 50, kParentTime);
    rig.reconciler.compute_unassigned("US-FL", Metric::Confirmed, kDay, kParentTime);
    auto rollup = rig.reconciler.finest_granularity_rollup("US", Metric::Confirmed, kDay);
    const auto& fl = rollup.at("US-FL");
    EXPECT_EQ(fl.total, 100);
    EXPECT_TRUE(fl.from_children);
    EXPECT_EQ(fl.children_sum, 90);
    EXPECT_EQ(fl.unassigned, 10);
    EXPECT_EQ(rollup.at("US").total, 100);
}

TEST(Rollup, ChildlessRegionUsesOwnValue)
{
    Rig rig;
    rig.put("US-NY", 70, kParentTime);
    auto rollup = rig.reconciler.finest_granularity_rollup("US", Metric::Confirmed, kDay);
    EXPECT_EQ(rollup.at("US-NY").total, 70);
    EXPECT_FALSE(rollup.at("US-NY").from_children);
    EXPECT_FALSE(rollup.at("US-FL").has_data);
    EXPECT_EQ(rollup.at("US").total, 70);
}

TEST(Rollup, ChildLeadTotalIsChildrenSum)
{
    Rig rig;
    rig.florida_state(60, 50, kParentTime + std::chrono::hours{1});
    auto rollup = rig.reconciler.finest_granularity_rollup("US", Metric::Confirmed, kDay);
    EXPECT_EQ(rollup.at("US-FL").total, 110);
    EXPECT_TRUE(rollup.at("US-FL").child_lead);
}

// Random three-level trees with random own reports; every region's display
// total matches the max(own, children) oracle.
TEST(RollupProperty, MatchesOracleOnRandomTrees)
{
    std::mt19937 rng(41);
    for (int round = 0; round < 100; ++round) {
        RegionTree regions;
        SeriesStore store{regions};
        Journal journal;
        QualityGate gate{GateConfig{}, regions, store, journal};
        Reconciler reconciler{regions, store, gate};
        std::map<std::string, oracle::Node> tree;
        auto add = [&](const std::string& id, Level level, std::optional<std::string> parent) {
            regions.register_region(fixture::region(id, level, parent));
            tree[id] = {};
            if (parent) {
                tree[*parent].children.push_back(id);
            }
            if (rng() % 3 != 0) {
                auto v = static_cast<std::int64_t>(rng() % 500);
                store.commit_point(id, Metric::Confirmed, kDay, v, fixture::prov());
                tree[id].own = v;
            }
        };
        add("ZZ", Level::Country, std::nullopt);
        const int divisions = 1 + static_cast<int>(rng() % 5);
        int nodes = 1;
        for (int i = 0; i < divisions && nodes < 50; ++i) {
            auto div = "ZZ-D" + std::to_string(i);
            add(div, Level::Division, "ZZ");
            ++nodes;
            const int subs = static_cast<int>(rng() % 9);
            for (int k = 0; k < subs && nodes < 50; ++k) {
                add(div + "-S" + std::to_string(k), Level::Subdivision, div);
                ++nodes;
            }
        }
        auto rollup = reconciler.finest_granularity_rollup("ZZ", Metric::Confirmed, kDay);
        for (const auto& [id, node] : tree) {
            auto expected = oracle::display_total(tree, id);
            ASSERT_EQ(rollup.at(id).has_data, expected.has_data) << id;
            ASSERT_EQ(rollup.at(id).total, expected.total) << id;
        }
    }
}
