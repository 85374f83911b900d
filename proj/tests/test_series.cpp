#include "covidnet/error.hpp"
#include "covidnet/series.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

using namespace covidnet;
using fixture::day;
using fixture::prov;

namespace {

std::vector<std::int64_t> values_of(const std::vector<DatedValue>& v)
{
    std::vector<std::int64_t> out;
    for (const auto& p : v) {
        out.push_back(p.value);
    }
    return out;
}

std::vector<DatedValue> consecutive(Date start, std::vector<std::int64_t> values)
{
    std::vector<DatedValue> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.push_back({start + static_cast<int>(i), values[i]});
    }
    return out;
}

CaseRecord record(std::string id, std::string region, Date d, std::int64_t size, Metric m = Metric::Confirmed)
{
    CaseRecord r;
    r.record_id = std::move(id);
    r.region_id = std::move(region);
    r.report_date = d;
    r.cluster_size = size;
    r.metric = m;
    r.source_refs = {"https://example.org/" + r.record_id};
    return r;
}

class Store : public ::testing::Test {
protected:
    Store() { fixture::florida(regions); }

    RegionTree regions;
    SeriesStore store{regions};
    const std::string oka = "US-FL-091";
};

} // namespace

TEST(Metric, ParsesCaseInsensitively)
{
    EXPECT_EQ(parse_metric("CONFIRMED"), Metric::Confirmed);
    EXPECT_EQ(parse_metric("confirmed"), Metric::Confirmed);
    EXPECT_EQ(parse_metric("tested_positive"), Metric::TestedPositive);
    EXPECT_EQ(to_string(Metric::Hospitalized), "HOSPITALIZED");
    EXPECT_THROW(parse_metric("infected"), Error);
}

TEST(Decimal, RoundsHalfAwayFromZero)
{
    EXPECT_EQ(to_decimal(Rational(1, 20), 2), "0.05");
    EXPECT_EQ(to_decimal(Rational(2, 3), 4), "0.6667");
    EXPECT_EQ(to_decimal(Rational(250), 0), "250");
}

TEST_F(Store, CommitsConsecutivePoints)
{
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 10, prov());
    store.commit_point(oka, Metric::Confirmed, day("2020-03-02"), 12, prov());
    store.commit_point(oka, Metric::Confirmed, day("2020-03-03"), 15, prov());
    EXPECT_EQ(values_of(store.series(oka, Metric::Confirmed)->values()), (std::vector<std::int64_t>{10, 12, 15}));
}

TEST_F(Store, RejectsDecreaseWithoutRepair)
{
    store.commit_point(oka, Metric::Confirmed, day("2020-03-03"), 15, prov());
    try {
        store.commit_point(oka, Metric::Confirmed, day("2020-03-04"), 14, prov());
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MonotonicityViolation);
    }
    store.commit_point(oka, Metric::Confirmed, day("2020-03-05"), 20, prov());
    EXPECT_THROW(store.commit_point(oka, Metric::Confirmed, day("2020-03-04"), 21, prov()), Error);
}

TEST_F(Store, RecommitIsIdempotent)
{
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 10, prov("a", "2020-03-01T10:00:00Z"));
    auto digest = store.digest();
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 10, prov("b", "2020-03-02T10:00:00Z"));
    EXPECT_EQ(store.digest(), digest);
}

TEST_F(Store, UnknownRegion)
{
    try {
        store.commit_point("XX", Metric::Confirmed, day("2020-03-01"), 1, prov());
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownRegion);
    }
}

TEST_F(Store, ReplaceHistoryWithRevision)
{
    store.replace_history(oka, Metric::Confirmed, consecutive(day("2020-03-01"), {10, 12, 15}), prov());
    store.replace_history(oka, Metric::Confirmed, consecutive(day("2020-03-01"), {10, 11, 14}), prov());
    EXPECT_EQ(values_of(store.series(oka, Metric::Confirmed)->values()), (std::vector<std::int64_t>{10, 11, 14}));
}

TEST_F(Store, ReplaceHistoryIdenticalIsNoOp)
{
    auto h = consecutive(day("2020-03-01"), {10, 12, 15});
    store.replace_history(oka, Metric::Confirmed, h, prov("a"));
    auto digest = store.digest();
    store.replace_history(oka, Metric::Confirmed, h, prov("b", "2020-05-01T00:00:00Z"));
    EXPECT_EQ(store.digest(), digest);
}

TEST_F(Store, ReplaceHistoryRejectsNonMonotonic)
{
    try {
        store.replace_history(oka, Metric::Confirmed, consecutive(day("2020-03-01"), {10, 12, 9}), prov());
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonMonotonicPayload);
    }
    EXPECT_FALSE(store.series(oka, Metric::Confirmed));
}

TEST(MonotonicRepair, ClampsTrailingPoint)
{
    auto s = consecutive(day("2020-03-01"), {10, 12, 15});
    auto out = monotonic_repair(s, day("2020-03-04"), 14);
    EXPECT_EQ(values_of(out), (std::vector<std::int64_t>{10, 12, 14, 14}));
    EXPECT_EQ(out.back().date, day("2020-03-04"));
}

TEST(MonotonicRepair, ClampsSeveralPoints)
{
    auto s = consecutive(day("2020-03-01"), {10, 12, 15});
    EXPECT_EQ(values_of(monotonic_repair(s, day("2020-03-04"), 11)), (std::vector<std::int64_t>{10, 11, 11, 11}));
}

TEST(MonotonicRepair, EqualityIsNotADecrease)
{
    auto s = consecutive(day("2020-03-01"), {10});
    EXPECT_EQ(values_of(monotonic_repair(s, day("2020-03-02"), 10)), (std::vector<std::int64_t>{10, 10}));
}

TEST(MonotonicRepair, Errors)
{
    auto s = consecutive(day("2020-03-01"), {10, 12});
    try {
        monotonic_repair(s, day("2020-03-03"), 13);
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotADecrease);
    }
    try {
        monotonic_repair(s, day("2020-03-02"), 11);
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfOrderDate);
    }
}

TEST(MonotonicRepairProperty, MatchesMinimalSuffixOracle)
{
    std::mt19937_64 rng(11);
    for (int round = 0; round < 500; ++round) {
        std::vector<std::int64_t> values;
        std::int64_t v = static_cast<std::int64_t>(rng() % 50);
        for (int i = 0, n = 1 + static_cast<int>(rng() % 20); i < n; ++i) {
            v += static_cast<std::int64_t>(rng() % 10);
            values.push_back(v);
        }
        std::int64_t next = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(values.back() + 1));
        auto series = consecutive(day("2020-03-01"), values);
        auto out = values_of(monotonic_repair(series, day("2020-03-01") + static_cast<int>(values.size()), next));
        auto expected = oracle::minimal_suffix_clamp(values, next);
        ASSERT_EQ(out, expected);
        EXPECT_TRUE(std::is_sorted(out.begin(), out.end()));
        EXPECT_EQ(out.back(), next);
    }
}

TEST(Aggregate, TwoRecordsAccumulate)
{
    RegionTree t;
    fixture::florida(t);
    std::vector<CaseRecord> recs{record("a", "US-FL-091", day("2020-03-01"), 2),
                                 record("b", "US-FL-091", day("2020-03-02"), 3)};
    auto out = aggregate_case_records(recs, t);
    ASSERT_EQ(out.size(), 1u);
    auto series = out.at(SeriesKey{"US-FL-091", Metric::Confirmed});
    EXPECT_EQ(series, (std::vector<DatedValue>{{day("2020-03-01"), 2}, {day("2020-03-02"), 5}}));
}

TEST(Aggregate, EmptyInputEmptyOutput)
{
    RegionTree t;
    EXPECT_TRUE(aggregate_case_records({}, t).empty());
}

TEST(Aggregate, UnknownRegion)
{
    RegionTree t;
    std::vector<CaseRecord> recs{record("a", "XX", day("2020-03-01"), 1)};
    EXPECT_THROW(aggregate_case_records(recs, t), Error);
}

TEST(AggregateProperty, MatchesNaiveTally)
{
    RegionTree t;
    fixture::florida(t);
    const std::vector<std::string> ids{"US-FL-091", "US-FL-086", "US-FL", "US-NY"};
    std::mt19937 rng(3);
    std::vector<CaseRecord> recs;
    for (int i = 0; i < 1000; ++i) {
        recs.push_back(record("r" + std::to_string(i), ids[rng() % ids.size()],
                              day("2020-03-01") + static_cast<int>(rng() % 40), 1 + rng() % 5,
                              rng() % 4 == 0 ? Metric::Deceased : Metric::Confirmed));
    }
    auto out = aggregate_case_records(recs, t);
    auto expected = oracle::naive_tally(recs);
    ASSERT_EQ(out.size(), expected.size());
    for (const auto& [key, series] : expected) {
        EXPECT_EQ(out.at(SeriesKey{key.first, key.second}), series);
    }
}

TEST(DailyNew, Differences)
{
    auto s = consecutive(day("2020-03-01"), {10, 12, 15});
    EXPECT_EQ(values_of(daily_new(s)), (std::vector<std::int64_t>{10, 2, 3}));
}

TEST(DailyNewProperty, Telescopes)
{
    std::mt19937 rng(5);
    for (int round = 0; round < 200; ++round) {
        std::vector<std::int64_t> values;
        std::int64_t v = 0;
        for (int i = 0, n = 1 + static_cast<int>(rng() % 30); i < n; ++i) {
            v += rng() % 100;
            values.push_back(v);
        }
        auto d = daily_new(consecutive(day("2020-03-01"), values));
        std::int64_t sum = 0;
        for (const auto& p : d) {
            sum += p.value;
        }
        EXPECT_EQ(sum, values.back());
    }
}

TEST(PerMillion, Arithmetic)
{
    EXPECT_EQ(per_million(500, 2'000'000), Rational(250));
    EXPECT_EQ(per_million(1, 3'000'000), Rational(1, 3));
    EXPECT_THROW(per_million(5, 0), Error);
}

TEST(StatRow, FatalityRateAndPerMillion)
{
    auto r = fixture::region("X", Level::Country, std::nullopt, 1'000'000);
    auto row = make_stat_row(r, 200, 10, std::nullopt);
    EXPECT_EQ(row.fatality_rate, Rational(1, 20));
    EXPECT_EQ(to_decimal(*row.fatality_rate, 2), "0.05");
    EXPECT_EQ(row.confirmed_per_million, Rational(200));

    auto unknown = fixture::region("Y", Level::Country);
    auto row2 = make_stat_row(unknown, 0, 0, 5);
    EXPECT_FALSE(row2.fatality_rate);
    EXPECT_FALSE(row2.confirmed_per_million);
    EXPECT_EQ(row2.recovered, 5);
}

TEST_F(Store, StatRowsFromStore)
{
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 200, prov());
    store.commit_point(oka, Metric::Deceased, day("2020-03-01"), 10, prov());
    std::vector<std::string> ids{oka};
    auto rows = store.stat_rows(ids);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].confirmed, 200);
    EXPECT_EQ(rows[0].fatality_rate, Rational(1, 20));
    EXPECT_EQ(rows[0].confirmed_per_million, Rational(200 * 1'000'000, 210738));
    EXPECT_FALSE(rows[0].recovered);
}

TEST_F(Store, CompactTableForwardFills)
{
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 2, prov());
    store.commit_point(oka, Metric::Confirmed, day("2020-03-03"), 5, prov());
    std::vector<std::string> ids{oka, "US-FL-086"};
    auto t = store.to_compact_table(ids, Metric::Confirmed, day("2020-03-01"), day("2020-03-04"));
    ASSERT_EQ(t.dates.size(), 4u);
    EXPECT_EQ(t.rows[0], (std::vector<std::int64_t>{2, 2, 5, 5}));
    EXPECT_EQ(t.rows[1], (std::vector<std::int64_t>{0, 0, 0, 0}));
}

TEST_F(Store, CompactTableSingleCell)
{
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 7, prov());
    std::vector<std::string> ids{oka};
    auto t = store.to_compact_table(ids, Metric::Confirmed, day("2020-03-01"), day("2020-03-01"));
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0], (std::vector<std::int64_t>{7}));
    EXPECT_THROW(store.to_compact_table(ids, Metric::Confirmed, day("2020-03-02"), day("2020-03-01")), Error);
}

TEST_F(Store, CompactTableCsv)
{
    EXPECT_EQ(write_ct_csv(store.to_compact_table(Metric::Confirmed)), "region_id\n");
    store.commit_point(oka, Metric::Confirmed, day("2020-03-01"), 2, prov());
    store.commit_point(oka, Metric::Confirmed, day("2020-03-02"), 3, prov());
    EXPECT_EQ(write_ct_csv(store.to_compact_table(Metric::Confirmed)),
              "region_id,2020-03-01,2020-03-02\nUS-FL-091,2,3\n");
}

TEST_F(Store, CompactTableProperty)
{
    std::mt19937 rng(9);
    std::vector<DatedValue> points;
    std::int64_t v = 0;
    for (int i = 0; i < 60; ++i) {
        if (rng() % 3 == 0) {
            continue;
        }
        v += rng() % 20;
        points.push_back({day("2020-03-01") + i, v});
        store.commit_point(oka, Metric::Confirmed, points.back().date, v, prov());
    }
    std::vector<std::string> ids{oka};
    auto t = store.to_compact_table(ids, Metric::Confirmed, day("2020-02-25"), day("2020-05-10"));
    for (std::size_t i = 0; i < t.dates.size(); ++i) {
        EXPECT_EQ(t.rows[0][i], oracle::forward_fill(points, t.dates[i]));
    }
    EXPECT_EQ(t.rows[0].back(), points.back().value);
}

TEST_F(Store, DeriveActive)
{
    const auto d = day("2020-03-10");
    store.commit_point(oka, Metric::Confirmed, d, 100, prov());
    EXPECT_EQ(std::get<std::int64_t>(store.derive_active(oka, d)), 100);
    store.commit_point(oka, Metric::Deceased, d, 10, prov());
    store.commit_point(oka, Metric::Recovered, d, 30, prov());
    EXPECT_EQ(std::get<std::int64_t>(store.derive_active(oka, d)), 60);

    const std::string dade = "US-FL-086";
    store.commit_point(dade, Metric::Confirmed, d, 10, prov());
    store.commit_point(dade, Metric::Recovered, d, 20, prov());
    auto bad = store.derive_active(dade, d);
    ASSERT_TRUE(std::holds_alternative<DataInconsistent>(bad));
    EXPECT_EQ(std::get<DataInconsistent>(bad).recovered, 20);

    EXPECT_THROW(store.derive_active("US-NY", d), Error);
}

TEST(Align, FirstCrossing)
{
    auto s = consecutive(day("2020-03-01"), {80, 120, 200});
    auto a = std::get<std::vector<AlignedPoint>>(align_at_threshold(s, 100));
    EXPECT_EQ(a, (std::vector<AlignedPoint>{{0, 120}, {1, 200}}));
}

TEST(Align, ThresholdOneStartsAtFirstDate)
{
    auto s = consecutive(day("2020-03-01"), {5, 6});
    auto a = std::get<std::vector<AlignedPoint>>(align_at_threshold(s, 1));
    EXPECT_EQ(a.front(), (AlignedPoint{0, 5}));
}

TEST(Align, BelowThreshold)
{
    auto s = consecutive(day("2020-03-01"), {10, 99});
    auto r = align_at_threshold(s, 100);
    ASSERT_TRUE(std::holds_alternative<BelowThreshold>(r));
    EXPECT_EQ(std::get<BelowThreshold>(r).max_value, 99);
    EXPECT_THROW(align_at_threshold(s, 0), Error);
}

TEST(Align, GapsKeepCalendarOffsets)
{
    std::vector<DatedValue> s{{day("2020-03-01"), 100}, {day("2020-03-05"), 150}};
    auto a = std::get<std::vector<AlignedPoint>>(align_at_threshold(s, 100));
    EXPECT_EQ(a, (std::vector<AlignedPoint>{{0, 100}, {4, 150}}));
}

TEST_F(Store, RepairCommitClampsHistory)
{
    store.replace_history(oka, Metric::Confirmed, consecutive(day("2020-03-01"), {10, 12, 15}), prov());
    store.repair_commit(oka, Metric::Confirmed, day("2020-03-04"), 11, prov());
    EXPECT_EQ(values_of(store.series(oka, Metric::Confirmed)->values()),
              (std::vector<std::int64_t>{10, 11, 11, 11}));
}

TEST_F(Store, ForceCommitKeepsOrder)
{
    store.replace_history(oka, Metric::Confirmed, consecutive(day("2020-03-01"), {10, 12, 15, 20}), prov());
    store.force_commit(oka, Metric::Confirmed, day("2020-03-02"), 18, prov());
    EXPECT_EQ(values_of(store.series(oka, Metric::Confirmed)->values()),
              (std::vector<std::int64_t>{10, 18, 18, 20}));
    EXPECT_TRUE(store.series(oka, Metric::Confirmed)->is_monotonic());
}

TEST_F(Store, CaseRecordsAndEtCsv)
{
    auto r = record("on-1", oka, day("2020-03-01"), 2);
    r.demographics = {{"age", "50s"}, {"sex", "M"}};
    r.summary = "travel, cluster";
    r.source_refs = {"https://a", "https://b"};
    EXPECT_TRUE(store.add_case_record(r));
    EXPECT_FALSE(store.add_case_record(r));
    EXPECT_TRUE(store.has_case_record("on-1"));
    auto bad = r;
    bad.record_id = "x";
    bad.source_refs.clear();
    EXPECT_THROW(store.add_case_record(bad), Error);
    bad.source_refs = {"u"};
    bad.cluster_size = 0;
    EXPECT_THROW(store.add_case_record(bad), Error);

    auto records = store.case_records();
    EXPECT_EQ(write_et_csv(records),
              "record_id,region_id,report_date,metric,cluster_size,demographics,summary,source_refs\n"
              "on-1,US-FL-091,2020-03-01,CONFIRMED,2,age=50s;sex=M,\"travel, cluster\",https://a|https://b\n");
}

TEST_F(Store, DumpRestoreRoundTrip)
{
    store.replace_history(oka, Metric::Confirmed, consecutive(day("2020-03-01"), {10, 12, 15}), prov());
    store.add_case_record(record("a", oka, day("2020-03-01"), 1));
    auto dump = store.canonical_dump();
    SeriesStore copy(regions);
    copy.restore(dump);
    EXPECT_EQ(copy.digest(), store.digest());
    EXPECT_EQ(copy.canonical_dump(), dump);
    EXPECT_EQ(copy.series(oka, Metric::Confirmed), store.series(oka, Metric::Confirmed));
}

TEST_F(Store, ConcurrentReadersSeeMonotonicSnapshots)
{
    std::atomic<bool> done{false};
    std::thread writer([&] {
        for (int i = 0; i < 500; ++i) {
            store.commit_point(oka, Metric::Confirmed, day("2020-03-01") + i, i * 3, prov());
        }
        done = true;
    });
    std::thread reader([&] {
        while (!done) {
            if (auto s = store.series(oka, Metric::Confirmed)) {
                EXPECT_TRUE(s->is_monotonic());
            }
        }
    });
    writer.join();
    reader.join();
    EXPECT_EQ(store.series(oka, Metric::Confirmed)->points.size(), 500u);
}
