#include "covidnet/region.hpp"

#include "covidnet/error.hpp"

#include <json.hpp>

#include <fstream>
#include <mutex>
#include <sstream>

namespace covidnet {

std::string_view to_string(Level level) noexcept
{
    switch (level) {
    case Level::Country: return "COUNTRY";
    case Level::Division: return "DIVISION";
    case Level::Subdivision: return "SUBDIVISION";
    }
    return "?";
}

Level parse_level(std::string_view text)
{
    if (text == "COUNTRY") return Level::Country;
    if (text == "DIVISION") return Level::Division;
    if (text == "SUBDIVISION") return Level::Subdivision;
    throw Error(ErrorCode::InvalidRegion, "unknown region level: " + std::string(text));
}

Region RegionTree::register_region(Region descriptor)
{
    std::unique_lock lock(mu_);
    return register_locked(std::move(descriptor));
}

Region RegionTree::register_locked(Region r)
{
    if (r.id.empty()) {
        throw Error(ErrorCode::InvalidRegion, "region code is empty");
    }
    if (r.population && *r.population < 0) {
        throw Error(ErrorCode::InvalidRegion, r.id + ": population must be non-negative");
    }
    if (regions_.count(r.id) != 0) {
        throw Error(ErrorCode::DuplicateCode, "region already registered: " + r.id);
    }
    if (r.level == Level::Country) {
        if (r.parent_id) {
            throw Error(ErrorCode::LevelMismatch, r.id + ": a country has no parent");
        }
        if (r.is_unassigned) {
            throw Error(ErrorCode::InvalidRegion, r.id + ": a country cannot be an unassigned bucket");
        }
    }
    else {
        if (!r.parent_id) {
            throw Error(ErrorCode::UnknownParent, r.id + ": missing parent");
        }
        auto parent = regions_.find(*r.parent_id);
        if (parent == regions_.end()) {
            throw Error(ErrorCode::UnknownParent, r.id + ": parent not registered: " + *r.parent_id);
        }
        if (static_cast<int>(parent->second.level) + 1 != static_cast<int>(r.level)) {
            throw Error(ErrorCode::LevelMismatch,
                        r.id + ": parent " + *r.parent_id + " is not exactly one level above");
        }
        if (r.id.rfind(*r.parent_id + "-", 0) != 0) {
            throw Error(ErrorCode::InvalidRegion, r.id + ": code must extend parent code " + *r.parent_id);
        }
        const bool unassigned_code = r.id == *r.parent_id + std::string(kUnassignedSuffix);
        if (unassigned_code != r.is_unassigned) {
            throw Error(ErrorCode::InvalidRegion,
                        r.id + ": only '<parent>" + std::string(kUnassignedSuffix) + "' is an unassigned bucket");
        }
    }

    auto id = r.id;
    if (r.parent_id) {
        children_[*r.parent_id].push_back(id);
    }
    order_.push_back(id);
    return regions_.emplace(id, std::move(r)).first->second;
}

Region RegionTree::ensure_unassigned(std::string_view parent_id)
{
    std::unique_lock lock(mu_);
    auto parent = regions_.find(std::string(parent_id));
    if (parent == regions_.end()) {
        throw Error(ErrorCode::UnknownParent, "unknown parent: " + std::string(parent_id));
    }
    if (parent->second.level == Level::Subdivision) {
        throw Error(ErrorCode::LeafParent, "subdivision cannot have children: " + std::string(parent_id));
    }
    auto code = std::string(parent_id) + std::string(kUnassignedSuffix);
    if (auto it = regions_.find(code); it != regions_.end()) {
        return it->second;
    }
    Region r;
    r.id = code;
    r.name_en = parent->second.name_en + " (unassigned)";
    r.name_local = r.name_en;
    r.level = static_cast<Level>(static_cast<int>(parent->second.level) + 1);
    r.parent_id = std::string(parent_id);
    r.is_unassigned = true;
    return register_locked(std::move(r));
}

Region RegionTree::resolve(std::string_view code) const
{
    auto r = find(code);
    if (!r) {
        throw Error(ErrorCode::NotFound, "region not found: " + std::string(code));
    }
    return *r;
}

std::optional<Region> RegionTree::find(std::string_view code) const
{
    std::shared_lock lock(mu_);
    auto it = regions_.find(std::string(code));
    if (it == regions_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool RegionTree::contains(std::string_view code) const
{
    std::shared_lock lock(mu_);
    return regions_.count(std::string(code)) != 0;
}

std::vector<Region> RegionTree::children(std::string_view code) const
{
    std::shared_lock lock(mu_);
    std::vector<Region> out;
    auto it = children_.find(std::string(code));
    if (it == children_.end()) {
        return out;
    }
    out.reserve(it->second.size());
    for (const auto& id : it->second) {
        out.push_back(regions_.at(id));
    }
    return out;
}

std::vector<Region> RegionTree::roots() const
{
    std::shared_lock lock(mu_);
    std::vector<Region> out;
    for (const auto& id : order_) {
        const auto& r = regions_.at(id);
        if (r.level == Level::Country) {
            out.push_back(r);
        }
    }
    return out;
}

std::vector<Region> RegionTree::all() const
{
    std::shared_lock lock(mu_);
    std::vector<Region> out;
    out.reserve(order_.size());
    for (const auto& id : order_) {
        out.push_back(regions_.at(id));
    }
    return out;
}

std::size_t RegionTree::size() const
{
    std::shared_lock lock(mu_);
    return regions_.size();
}

bool RegionTree::is_within(std::string_view code, std::string_view ancestor) const
{
    std::shared_lock lock(mu_);
    auto it = regions_.find(std::string(code));
    while (it != regions_.end()) {
        if (it->first == ancestor) {
            return true;
        }
        if (!it->second.parent_id) {
            return false;
        }
        it = regions_.find(*it->second.parent_id);
    }
    return false;
}

void RegionTree::load_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open region registry: " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    load_json(ss.str());
}

void RegionTree::load_json(std::string_view text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("region registry: ") + e.what());
    }
    const auto& list = doc.is_array() ? doc : doc.value("regions", nlohmann::json::array());
    for (const auto& rec : list) {
        try {
            Region r;
            r.id = rec.at("code").get<std::string>();
            r.name_en = rec.value("name_en", r.id);
            r.name_local = rec.value("name_local", r.name_en);
            r.level = parse_level(rec.at("level").get<std::string>());
            if (rec.contains("parent") && !rec["parent"].is_null()) {
                r.parent_id = rec["parent"].get<std::string>();
            }
            if (rec.contains("population") && !rec["population"].is_null()) {
                r.population = rec["population"].get<std::int64_t>();
            }
            r.is_unassigned = rec.value("unassigned", false);
            if (rec.contains("contact") && !rec["contact"].is_null()) {
                r.health_dept_contact = rec["contact"].get<std::string>();
            }
            register_region(std::move(r));
        }
        catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("region registry record: ") + e.what());
        }
    }
}

} // namespace covidnet
