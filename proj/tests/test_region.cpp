#include "covidnet/error.hpp"
#include "covidnet/region.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <thread>

using namespace covidnet;
using fixture::region;

namespace {

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

} // namespace

TEST(RegionTree, RegistersCountryAndDivision)
{
    RegionTree t;
    t.register_region(region("IT", Level::Country));
    auto lombardia = region("IT-25", Level::Division, "IT");
    lombardia.name_en = "Lombardia";
    t.register_region(lombardia);

    EXPECT_EQ(t.resolve("IT-25").name_en, "Lombardia");
    EXPECT_EQ(t.resolve("IT").level, Level::Country);
    auto kids = t.children("IT");
    ASSERT_EQ(kids.size(), 1u);
    EXPECT_EQ(kids[0].id, "IT-25");
}

TEST(RegionTree, RejectsMissingParent)
{
    RegionTree t;
    EXPECT_EQ(code_of([&] { t.register_region(region("US-NY", Level::Division, "US")); }), ErrorCode::UnknownParent);
}

TEST(RegionTree, RejectsDuplicate)
{
    RegionTree t;
    t.register_region(region("US", Level::Country));
    t.register_region(region("US-NY", Level::Division, "US"));
    EXPECT_EQ(code_of([&] { t.register_region(region("US-NY", Level::Division, "US")); }), ErrorCode::DuplicateCode);
}

TEST(RegionTree, RejectsLevelSkips)
{
    RegionTree t;
    t.register_region(region("US", Level::Country));
    EXPECT_EQ(code_of([&] { t.register_region(region("US-NY-061", Level::Subdivision, "US")); }),
              ErrorCode::LevelMismatch);
    t.register_region(region("US-NY", Level::Division, "US"));
    t.register_region(region("US-NY-061", Level::Subdivision, "US-NY"));
    EXPECT_EQ(code_of([&] { t.register_region(region("US-NY-061-X", Level::Subdivision, "US-NY-061")); }),
              ErrorCode::LevelMismatch);
    EXPECT_EQ(code_of([&] { t.register_region(region("CA", Level::Country, "US")); }), ErrorCode::LevelMismatch);
}

TEST(RegionTree, RejectsBadCodesAndPopulation)
{
    RegionTree t;
    t.register_region(region("US", Level::Country));
    EXPECT_EQ(code_of([&] { t.register_region(region("CA-ON", Level::Division, "US")); }), ErrorCode::InvalidRegion);
    EXPECT_EQ(code_of([&] { t.register_region(region("US-TX", Level::Division, "US", -1)); }),
              ErrorCode::InvalidRegion);
    auto fake = region("US-XX", Level::Division, "US");
    fake.is_unassigned = true;
    EXPECT_EQ(code_of([&] { t.register_region(fake); }), ErrorCode::InvalidRegion);
}

TEST(RegionTree, EnsureUnassignedIsIdempotent)
{
    RegionTree t;
    t.register_region(region("US", Level::Country));
    t.register_region(region("US-NY", Level::Division, "US"));
    auto a = t.ensure_unassigned("US-NY");
    auto b = t.ensure_unassigned("US-NY");
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.id, "US-NY-UNASSIGNED");
    EXPECT_TRUE(a.is_unassigned);
    EXPECT_EQ(a.level, Level::Subdivision);
    EXPECT_EQ(t.children("US-NY").size(), 1u);
}

TEST(RegionTree, UnassignedUnderCountryIsDivision)
{
    RegionTree t;
    t.register_region(region("US", Level::Country));
    auto u = t.ensure_unassigned("US");
    EXPECT_EQ(u.level, Level::Division);
    EXPECT_TRUE(u.is_unassigned);
}

TEST(RegionTree, EnsureUnassignedErrors)
{
    RegionTree t;
    EXPECT_EQ(code_of([&] { t.ensure_unassigned("XX"); }), ErrorCode::UnknownParent);
    fixture::florida(t);
    EXPECT_EQ(code_of([&] { t.ensure_unassigned("US-FL-091"); }), ErrorCode::LeafParent);
}

TEST(RegionTree, ResolveUnknownIsNotFound)
{
    RegionTree t;
    EXPECT_EQ(code_of([&] { t.resolve("XX-99"); }), ErrorCode::NotFound);
    EXPECT_FALSE(t.find("XX-99"));
    EXPECT_TRUE(t.children("XX-99").empty());
}

TEST(RegionTree, ChildrenKeepRegistrationOrder)
{
    RegionTree t;
    t.register_region(region("CA", Level::Country));
    for (auto id : {"CA-QC", "CA-ON", "CA-BC", "CA-AB"}) {
        t.register_region(region(id, Level::Division, "CA"));
    }
    std::vector<std::string> ids;
    for (const auto& c : t.children("CA")) {
        ids.push_back(c.id);
    }
    EXPECT_EQ(ids, (std::vector<std::string>{"CA-QC", "CA-ON", "CA-BC", "CA-AB"}));
}

TEST(RegionTree, IsWithin)
{
    RegionTree t;
    fixture::florida(t);
    EXPECT_TRUE(t.is_within("US-FL-091", "US"));
    EXPECT_TRUE(t.is_within("US-FL-091", "US-FL"));
    EXPECT_TRUE(t.is_within("US-FL", "US-FL"));
    EXPECT_FALSE(t.is_within("US-NY", "US-FL"));
    EXPECT_FALSE(t.is_within("US", "US-FL"));
}

TEST(RegionTree, LoadsRegistryJson)
{
    RegionTree t;
    t.load_json(R"({"regions": [
        {"code": "US", "name_en": "United States", "level": "COUNTRY", "population": 328239523},
        {"code": "US-BOP", "name_en": "Federal Bureau of Prisons", "level": "DIVISION", "parent": "US"},
        {"code": "US-WA", "name_en": "Washington", "level": "DIVISION", "parent": "US", "contact": "DOH"},
        {"code": "US-WA-033", "name_en": "King", "level": "SUBDIVISION", "parent": "US-WA"}
    ]})");
    EXPECT_EQ(t.size(), 4u);
    EXPECT_EQ(t.resolve("US-WA").health_dept_contact, "DOH");
    EXPECT_EQ(t.resolve("US-BOP").level, Level::Division);
    EXPECT_EQ(t.resolve("US").population, 328239523);
    EXPECT_EQ(code_of([&] { t.load_json("{not json"); }), ErrorCode::InvalidConfig);
}

// Every region's parent resolves and sits exactly one level up; the child
// index is the inverse of the parent links.
TEST(RegionTreeProperty, RandomTreesAreWellFormed)
{
    std::mt19937 rng(7);
    for (int round = 0; round < 50; ++round) {
        RegionTree t;
        std::vector<std::string> countries;
        std::vector<std::string> divisions;
        int n = 0;
        for (int i = 0; i < 1 + static_cast<int>(rng() % 3); ++i) {
            auto id = "C" + std::to_string(n++);
            t.register_region(region(id, Level::Country));
            countries.push_back(id);
        }
        for (int i = 0; i < 10; ++i) {
            auto parent = countries[rng() % countries.size()];
            auto id = parent + "-D" + std::to_string(n++);
            t.register_region(region(id, Level::Division, parent));
            divisions.push_back(id);
            if (rng() % 3 == 0) {
                t.ensure_unassigned(parent);
            }
        }
        for (int i = 0; i < 20; ++i) {
            auto parent = divisions[rng() % divisions.size()];
            t.register_region(region(parent + "-S" + std::to_string(n++), Level::Subdivision, parent));
            if (rng() % 4 == 0) {
                t.ensure_unassigned(parent);
            }
        }
        std::size_t links = 0;
        for (const auto& r : t.all()) {
            if (r.level == Level::Country) {
                EXPECT_FALSE(r.parent_id);
                continue;
            }
            ASSERT_TRUE(r.parent_id);
            auto p = t.resolve(*r.parent_id);
            EXPECT_EQ(static_cast<int>(p.level) + 1, static_cast<int>(r.level));
            auto kids = t.children(p.id);
            EXPECT_EQ(std::count_if(kids.begin(), kids.end(), [&](const Region& k) { return k.id == r.id; }), 1);
            ++links;
        }
        std::size_t indexed = 0;
        for (const auto& r : t.all()) {
            auto kids = t.children(r.id);
            indexed += kids.size();
            EXPECT_LE(std::count_if(kids.begin(), kids.end(), [](const Region& k) { return k.is_unassigned; }), 1);
        }
        EXPECT_EQ(links, indexed);
    }
}

TEST(RegionTreeProperty, ConcurrentEnsureUnassignedCreatesOne)
{
    RegionTree t;
    t.register_region(region("US", Level::Country));
    t.register_region(region("US-NY", Level::Division, "US"));
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            for (int k = 0; k < 100; ++k) {
                t.ensure_unassigned("US-NY");
                t.resolve("US-NY");
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    EXPECT_EQ(t.children("US-NY").size(), 1u);
    EXPECT_EQ(t.size(), 3u);
}
