#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bauto/attr.hpp"
#include "bauto/types.hpp"

namespace bauto {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Span {
    uint64_t address = 0;
    uint64_t size = 0;
};

/// Identity-bearing description of a system object as the front-ends see it.
struct ObjectDescriptor {
    ObjectId id;
    Nature nature = Nature::other;
    ObjectType otype = ObjectType::obj_any;
    std::string name;          // canonical, when known
    std::optional<Span> span;  // variables only
};

/// True iff the address falls inside the variable's span (both ends
/// inclusive).
inline bool same_variable(uint64_t addr, const ObjectDescriptor& v) {
    if (!v.span) return false;
    return v.span->address <= addr && addr <= v.span->address + v.span->size;
}

// ---------------------------------------------------------------------------
// Path handling

/// Lowercases, normalizes separators to backslash and trims a trailing one.
inline std::string canonical_path(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (c == '/') c = '\\';
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (out.size() > 1 && out.back() == '\\') out.pop_back();
    return out;
}

namespace pathglob {

inline std::vector<std::string> segments(const std::string& canonical) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : canonical) {
        if (c == '\\') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline bool segment_matches(const std::string& pat, const std::string& seg, size_t pi = 0,
                            size_t si = 0) {
    while (pi < pat.size() && si < seg.size()) {
        if (pat[pi] == '*') {
            for (size_t skip = 0; si + skip <= seg.size(); ++skip)
                if (segment_matches(pat, seg, pi + 1, si + skip)) return true;
            return false;
        }
        if (pat[pi] != '?' && pat[pi] != seg[si]) return false;
        ++pi;
        ++si;
    }
    while (pi < pat.size() && pat[pi] == '*') ++pi;
    return pi == pat.size() && si == seg.size();
}

inline bool match_from(const std::vector<std::string>& pat, const std::vector<std::string>& segs,
                       size_t pi, size_t si) {
    if (pi == pat.size()) return si == segs.size();
    if (pat[pi] == "**") {
        for (size_t skip = si; skip <= segs.size(); ++skip)
            if (match_from(pat, segs, pi + 1, skip)) return true;
        return false;
    }
    if (si == segs.size()) return false;
    return segment_matches(pat[pi], segs[si]) && match_from(pat, segs, pi + 1, si + 1);
}

}  // namespace pathglob

/// Critical-resource configuration driving the string and address decision
/// trees. Patterns are anchored case-insensitive path globs; `*` matches
/// within a segment, `**` a whole subtree. Roots written as `{removable}:` or
/// `{network}:` expand through drive_natures.
struct ResourceConfig {
    std::vector<std::string> self_paths;
    std::vector<std::string> boot_locations;
    std::vector<std::string> com_locations;
    std::vector<std::string> temp_locations;
    std::map<std::string, std::string> drive_natures;      // "a:" -> local|network|removable
    std::map<std::string, std::string> special_constants;  // e.g. script self-reference names

    bool pattern_matches(const std::string& pattern, const std::string& canonical) const {
        auto pat = pathglob::segments(canonical_path(pattern));
        auto segs = pathglob::segments(canonical);
        if (!pat.empty() && !pat.front().empty() && pat.front().front() == '{') {
            auto close = pat.front().find('}');
            if (close == std::string::npos) return false;
            std::string wanted = pat.front().substr(1, close - 1);
            if (segs.empty()) return false;
            auto it = drive_natures.find(segs.front());
            if (it == drive_natures.end() || it->second != wanted) return false;
            std::vector<std::string> rest_pat(pat.begin() + 1, pat.end());
            std::vector<std::string> rest(segs.begin() + 1, segs.end());
            return pathglob::match_from(rest_pat, rest, 0, 0);
        }
        return pathglob::match_from(pat, segs, 0, 0);
    }

    bool any_matches(const std::vector<std::string>& patterns, const std::string& canonical) const {
        for (const auto& p : patterns)
            if (pattern_matches(p, canonical)) return true;
        return false;
    }

    static ResourceConfig from_json(const nlohmann::json& j) {
        ResourceConfig cfg;
        try {
            auto read_list = [&](const char* key, std::vector<std::string>& out) {
                if (!j.contains(key)) return;
                for (const auto& s : j.at(key)) out.push_back(canonical_path(s.get<std::string>()));
            };
            read_list("self_paths", cfg.self_paths);
            if (j.contains("boot_locations"))
                for (const auto& s : j.at("boot_locations")) cfg.boot_locations.push_back(s.get<std::string>());
            if (j.contains("com_locations"))
                for (const auto& s : j.at("com_locations")) cfg.com_locations.push_back(s.get<std::string>());
            if (j.contains("temp_locations"))
                for (const auto& s : j.at("temp_locations")) cfg.temp_locations.push_back(s.get<std::string>());
            if (j.contains("drive_natures"))
                for (auto it = j.at("drive_natures").begin(); it != j.at("drive_natures").end(); ++it)
                    cfg.drive_natures[canonical_path(it.key())] = it.value().get<std::string>();
            if (j.contains("special_constants"))
                for (auto it = j.at("special_constants").begin(); it != j.at("special_constants").end(); ++it)
                    cfg.special_constants[canonical_path(it.key())] = it.value().get<std::string>();
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError(std::string("bad resource config: ") + ex.what());
        }
        cfg.validate();
        return cfg;
    }

    void validate() const {
        for (const auto& self : self_paths) {
            if (any_matches(boot_locations, self) || any_matches(com_locations, self) ||
                any_matches(temp_locations, self))
                throw ConfigError("pattern sets overlap self path: " + self);
        }
    }
};

/// Per-analysis additions to the classifier inputs, e.g. the analyzed
/// script's own path.
struct ClassifyContext {
    std::vector<std::string> extra_self_paths;  // canonical
};

struct Classification {
    Nature nature = Nature::other;
    ObjectType type = ObjectType::obj_any;
};

/// Walks the hierarchical path tree: the root element picks the branch
/// (drive, device, registry), the location patterns assign the type. First
/// match wins in priority order self > boot > com > temp > perm.
inline Classification classify_string(const std::string& raw, const ResourceConfig& cfg,
                                      const ClassifyContext& ctx = {}) {
    std::string c = canonical_path(raw);

    for (const auto& s : cfg.self_paths)
        if (c == s) return {Nature::file, ObjectType::this_ref};
    for (const auto& s : ctx.extra_self_paths)
        if (c == s) return {Nature::file, ObjectType::this_ref};

    bool path_shaped = c.find('\\') != std::string::npos ||
                       (c.size() >= 2 && std::isalpha(static_cast<unsigned char>(c[0])) && c[1] == ':');
    Nature nature = Nature::other;
    if (c.rfind("\\device\\afd", 0) == 0) {
        return {Nature::socket, ObjectType::obj_com};
    } else if (c.rfind("\\device\\", 0) == 0) {
        nature = Nature::other;
    } else if (c.rfind("hklm\\", 0) == 0 || c.rfind("hkcu\\", 0) == 0 ||
               c.rfind("hkey_", 0) == 0 || c.rfind("\\registry\\", 0) == 0) {
        nature = Nature::registry_key;
    } else if (path_shaped) {
        auto segs = pathglob::segments(c);
        nature = segs.size() == 1 && segs[0].size() == 2 && segs[0][1] == ':' ? Nature::drive
                                                                              : Nature::file;
    }

    if (cfg.any_matches(cfg.boot_locations, c)) return {nature, ObjectType::obj_boot};
    if (cfg.any_matches(cfg.com_locations, c))
        return {nature == Nature::other ? Nature::other : nature, ObjectType::obj_com};
    if (cfg.any_matches(cfg.temp_locations, c)) return {nature, ObjectType::obj_temp};
    if (!path_shaped) return {Nature::other, ObjectType::obj_any};
    return {nature, ObjectType::obj_perm};
}

/// One labeled region of the address space: critical structures carry their
/// label, variable regions carry the owning descriptor.
struct MemoryRange {
    uint64_t lo = 0, hi = 0;
    std::string label;
    std::optional<ObjectId> object;
};

struct AddressClass {
    Nature nature = Nature::variable;
    ObjectType type = ObjectType::var;
    std::optional<ObjectId> existing;
};

/// Partition-of-address-space walk: execution-governing structures classify
/// as booting objects, known variable spans resolve to their descriptor, and
/// anything else is a fresh variable.
inline AddressClass classify_address(uint64_t addr, const ResourceConfig&,
                                     const std::vector<MemoryRange>& memory_map) {
    for (const auto& r : memory_map) {
        if (addr < r.lo || addr > r.hi) continue;
        if (r.label == "variable") return {Nature::variable, ObjectType::var, r.object};
        if (r.label == "import_table" || r.label == "service_table" || r.label == "entry_point")
            return {Nature::other, ObjectType::obj_boot, r.object};
    }
    return {Nature::variable, ObjectType::var, std::nullopt};
}

/// Updates a descriptor with a newly observed nature and type. The type moves
/// up the poset via type_refine; nullopt signals an incompatible typing (a
/// variable can not become the self-reference).
inline std::optional<ObjectDescriptor> refine_descriptor(const ObjectDescriptor& d,
                                                         std::optional<Nature> observed_nature,
                                                         ObjectType observed_type) {
    auto t = type_refine(d.otype, observed_type);
    if (!t) return std::nullopt;
    ObjectDescriptor out = d;
    out.otype = *t;
    if (out.nature == Nature::other && observed_nature) out.nature = *observed_nature;
    return out;
}

/// Allocates and resolves descriptors for one analysis run. Names map to a
/// single identity; variables are identified by address span.
class DescriptorRegistry {
public:
    explicit DescriptorRegistry(const ResourceConfig& cfg, ClassifyContext ctx = {})
        : cfg_(cfg), ctx_(std::move(ctx)) {}

    const ClassifyContext& context() const { return ctx_; }
    void add_self_path(const std::string& raw) {
        ctx_.extra_self_paths.push_back(canonical_path(raw));
    }

    ObjectDescriptor& for_name(const std::string& raw) {
        std::string c = canonical_path(raw);
        auto it = by_name_.find(c);
        if (it != by_name_.end()) return all_.at(it->second.value);
        Classification cls = classify_string(raw, cfg_, ctx_);
        ObjectDescriptor d;
        d.id = next_id();
        d.nature = cls.nature;
        d.otype = cls.type;
        d.name = c;
        by_name_[c] = d.id;
        return all_.emplace(d.id.value, std::move(d)).first->second;
    }

    ObjectDescriptor& for_address(uint64_t addr, uint64_t size) {
        for (auto id : variables_) {
            ObjectDescriptor& v = all_.at(id.value);
            if (same_variable(addr, v)) return v;
        }
        ObjectDescriptor d;
        d.id = next_id();
        d.nature = Nature::variable;
        d.otype = ObjectType::var;
        d.span = Span{addr, size};
        variables_.push_back(d.id);
        return all_.emplace(d.id.value, std::move(d)).first->second;
    }

    ObjectDescriptor& fresh(Nature nature, ObjectType type, std::string name = "") {
        ObjectDescriptor d;
        d.id = next_id();
        d.nature = nature;
        d.otype = type;
        d.name = std::move(name);
        return all_.emplace(d.id.value, std::move(d)).first->second;
    }

    ObjectDescriptor* find(ObjectId id) {
        auto it = all_.find(id.value);
        return it == all_.end() ? nullptr : &it->second;
    }

    std::vector<MemoryRange> variable_ranges() const {
        std::vector<MemoryRange> out;
        for (auto id : variables_) {
            const auto& v = all_.at(id.value);
            out.push_back(MemoryRange{v.span->address, v.span->address + v.span->size, "variable",
                                      v.id});
        }
        return out;
    }

private:
    ObjectId next_id() { return ObjectId{next_id_++}; }

    const ResourceConfig& cfg_;
    ClassifyContext ctx_;
    uint64_t next_id_ = 1;
    std::map<std::string, ObjectId> by_name_;
    std::unordered_map<uint64_t, ObjectDescriptor> all_;
    std::vector<ObjectId> variables_;
};

}  // namespace bauto
