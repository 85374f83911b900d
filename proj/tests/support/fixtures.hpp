#pragma once

#include "covidnet/engine.hpp"
#include "covidnet/gate.hpp"
#include "covidnet/journal.hpp"
#include "covidnet/region.hpp"
#include "covidnet/series.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include <unistd.h>

namespace fixture {

using namespace covidnet;

inline Instant at(const char* rfc3339) { return parse_instant(rfc3339); }

inline Date day(const char* iso) { return Date::parse(iso); }

inline Provenance prov(const std::string& source = "test", const char* when = "2020-04-01T12:00:00Z")
{
    return Provenance{source, at(when)};
}

inline Region region(std::string id, Level level, std::optional<std::string> parent = std::nullopt,
                     std::optional<std::int64_t> population = std::nullopt)
{
    Region r;
    r.id = id;
    r.name_en = id;
    r.name_local = id;
    r.level = level;
    r.parent_id = std::move(parent);
    r.population = population;
    return r;
}

/// US > US-FL > {US-FL-091 Okaloosa, US-FL-086 Miami-Dade}; US > US-NY.
inline void florida(RegionTree& t)
{
    t.register_region(region("US", Level::Country, std::nullopt, 328239523));
    t.register_region(region("US-FL", Level::Division, "US", 21477737));
    t.register_region(region("US-FL-091", Level::Subdivision, "US-FL", 210738));
    t.register_region(region("US-FL-086", Level::Subdivision, "US-FL", 2716940));
    t.register_region(region("US-NY", Level::Division, "US", 19453561));
}

inline ProposedChange point(const std::string& region, Metric metric, Date date, std::int64_t value,
                            const std::string& source = "test", Instant fetched = at("2020-04-01T12:00:00Z"))
{
    ProposedChange p;
    p.kind = ChangeKind::CommitPoint;
    p.region_id = region;
    p.metric = metric;
    p.paradigm = Paradigm::Snapshot;
    p.provenance = Provenance{source, fetched};
    p.date = date;
    p.value = value;
    return p;
}

inline ProposedChange history(const std::string& region, Metric metric, std::vector<DatedValue> points,
                              const std::string& source = "test", Instant fetched = at("2020-04-01T12:00:00Z"))
{
    ProposedChange p;
    p.kind = ChangeKind::ReplaceHistory;
    p.region_id = region;
    p.metric = metric;
    p.paradigm = Paradigm::FullHistory;
    p.provenance = Provenance{source, fetched};
    p.history = std::move(points);
    return p;
}

/// Tree, store, journal and gate wired together.
struct GateRig {
    RegionTree regions;
    SeriesStore store{regions};
    Journal journal;
    QualityGate gate;

    explicit GateRig(GateConfig config = {}) : gate(config, regions, store, journal) { florida(regions); }
};

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("covidnet-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Engine over the checked-in sample deployment (tests/data), optionally
/// persisted to `store`.
inline EngineConfig sample_config(const std::filesystem::path& store = {})
{
    auto c = EngineConfig::load(std::filesystem::path(COVIDNET_TEST_DATA) / "config.json");
    c.store_dir = store;
    c.api.token = "secret";
    return c;
}

} // namespace fixture
