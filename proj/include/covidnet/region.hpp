#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace covidnet {

enum class Level { Country = 0, Division = 1, Subdivision = 2 };

std::string_view to_string(Level level) noexcept;
Level parse_level(std::string_view text);

inline constexpr std::string_view kUnassignedSuffix = "-UNASSIGNED";

/// One node of the country -> division -> subdivision hierarchy. Codes are
/// dash-joined paths ("US", "US-NY", "US-NY-061"); a child's code always
/// starts with "<parent>-".
struct Region {
    std::string id;
    std::string name_en;
    std::string name_local;
    Level level = Level::Country;
    std::optional<std::string> parent_id;
    std::optional<std::int64_t> population;
    bool is_unassigned = false;
    std::optional<std::string> health_dept_contact;

    bool operator==(const Region&) const = default;
};

/// Registry of regions. Reads are concurrent, registrations take the writer
/// lock. All accessors return copies.
class RegionTree {
public:
    RegionTree() = default;
    RegionTree(const RegionTree&) = delete;
    RegionTree& operator=(const RegionTree&) = delete;

    Region register_region(Region descriptor);

    /// Returns the parent's "-UNASSIGNED" child, creating it on first call.
    Region ensure_unassigned(std::string_view parent_id);

    Region resolve(std::string_view code) const;
    std::optional<Region> find(std::string_view code) const;
    bool contains(std::string_view code) const;

    /// Children in registration order; empty for unknown codes.
    std::vector<Region> children(std::string_view code) const;
    std::vector<Region> roots() const;
    std::vector<Region> all() const;
    std::size_t size() const;

    /// True if `code` equals `ancestor` or lies below it.
    bool is_within(std::string_view code, std::string_view ancestor) const;

    /// Loads a JSON registry file: {"regions": [{"code", "name_en",
    /// "name_local", "level", "parent", "population", "contact"}]}.
    /// Records must be listed parents-first.
    void load_file(const std::filesystem::path& path);
    void load_json(std::string_view text);

private:
    Region register_locked(Region descriptor);

    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, Region> regions_;
    std::unordered_map<std::string, std::vector<std::string>> children_;
    std::vector<std::string> order_;
};

} // namespace covidnet
